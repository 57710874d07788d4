// SPDX-License-Identifier: Apache-2.0
//
// Minimal walkthrough: build a small in-memory video, run the full pipeline,
// and print where the token budget goes at each reduction stage.

#include <cstdio>

#include "unipatch/pipeline.hpp"
#include "unipatch/synth.hpp"

int main() {
  using namespace unipatch;

  SynthSpec spec;
  spec.kind = SourceKind::Video;
  spec.redundancy = 0.6;
  spec.planes = 6;
  spec.height = 128;
  spec.width = 128;

  VisualInput video;
  video.kind = SourceKind::Video;
  video.height = spec.height;
  video.width = spec.width;
  video.planes = gen_synthetic_planes(spec, 1);

  PipelineConfig config;
  config.kind = SourceKind::Video;
  config.seed = 1;

  const PipelineRun run = run_pipeline_on(video, config);
  std::printf("%u planes of %dx%d pixels\n", static_cast<unsigned>(video.planes.size()),
              video.height, video.width);
  std::printf("tokens after patchify: %ld\n", run.report.total_before);
  std::printf("tokens after 2x2 merge: %ld\n", run.report.stage2_input());
  std::printf("tokens after pruning (tau=%.2f): %ld  (pruning rate %.1f%%)\n", run.report.tau,
              run.report.total_after, 100.0 * run.report.rate);
  std::printf("encoder output: %d x %d, projector output: %d x %d\n", run.h_v.rows, run.h_v.cols,
              run.h_proj.rows, run.h_proj.cols);
  return 0;
}
