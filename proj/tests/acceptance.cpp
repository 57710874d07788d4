// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, each with a wall-clock
// budget. Exits nonzero if anything fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "unipatch/pipeline.hpp"
#include "unipatch/probes.hpp"
#include "unipatch/synth.hpp"
#include "unipatch/verify.hpp"

using namespace unipatch;

namespace {

struct Criterion {
  int id;
  std::string label;
  double limit_s;
  std::function<bool(std::string&)> body;
};

bool close(double got, double want, double margin) { return std::abs(got - want) <= margin; }

VisualInput constant_input(SourceKind kind, int planes, int h, int w, double fill) {
  VisualInput input;
  input.kind = kind;
  input.height = h;
  input.width = w;
  for (int i = 0; i < planes; ++i) input.planes.emplace_back(h, w, fill);
  return input;
}

PipelineConfig desk_config(SourceKind kind) {
  PipelineConfig config;
  config.kind = kind;
  config.encoder = {1, 8, 16, 2};
  config.d_hidden = 16;
  config.d_llm = 12;
  config.seed = 17;
  return config;
}

}  // namespace

int main() {
  std::vector<Criterion> criteria;

  criteria.push_back({1, "token-count arithmetic (196 tokens; merge quarters each plane)", 1.0,
                      [](std::string& note) {
                        const auto image = constant_input(SourceKind::Image2D, 1, 224, 224, 0.5);
                        const PipelineRun img = run_pipeline_on(image, desk_config(SourceKind::Image2D));
                        bool ok = img.report_json["tokens_before"] == 196 &&
                                  img.report_json["tokens_after_prune"] == 196 &&
                                  img.report_json["rate"] == 0.0;
                        // Merged planes: exactly a quarter of the patch count, several grids.
                        for (const auto& dims : std::vector<std::pair<int, int>>{{224, 224}, {64, 128}, {32, 32}}) {
                          const auto video =
                              constant_input(SourceKind::Video, 2, dims.first, dims.second, 0.1);
                          const PipelineRun run = run_pipeline_on(video, desk_config(SourceKind::Video));
                          const long before = run.report_json["tokens_before"].get<long>();
                          const long merged = run.report_json["tokens_after_merge"].get<long>();
                          ok = ok && merged * 4 == before;
                        }
                        note = "224x224 image -> 196 tokens, rate 0; merged planes at 1/4";
                        return ok;
                      }});

  criteria.push_back({2, "pruning-rate reproduction on the calibrated corpus (0.55 +/- 0.02)", 10.0,
                      [](std::string& note) {
                        SynthSpec spec;
                        spec.kind = SourceKind::Video;
                        spec.redundancy = 0.629;
                        spec.planes = 8;
                        spec.height = 224;
                        spec.width = 320;
                        VisualInput video;
                        video.kind = SourceKind::Video;
                        video.height = spec.height;
                        video.width = spec.width;
                        video.planes = gen_synthetic_planes(spec, 2026);
                        PipelineConfig config;  // default desk encoder (d = 64)
                        config.kind = SourceKind::Video;
                        config.seed = 0;
                        const PipelineRun run = run_pipeline_on(video, config);
                        char buf[96];
                        std::snprintf(buf, sizeof(buf), "reported rate %.4f", run.report.rate);
                        note = buf;
                        return close(run.report.rate, 0.55, 0.02);
                      }});

  criteria.push_back({3, "pruning masks equal brute force; tau-monotone on every instance", 30.0,
                      [](std::string& note) {
                        Rng rng(substream_seed(99, 3));
                        for (int t = 0; t < 1000; ++t) {
                          const PlaneSequence seq = suites::random_token_sequence(rng, 4, 3, 8);
                          const double tau = rng.uniform(0.0, 0.25);
                          const auto res = prune_interplane(seq, tau);
                          if (res.seq.keep != suites::prune_oracle(seq, tau)) return false;
                          const auto higher = prune_interplane(seq, tau + rng.uniform(0.0, 0.2));
                          for (std::size_t p = 0; p < seq.planes.size(); ++p)
                            for (std::size_t s = 0; s < res.seq.keep[p].size(); ++s)
                              if (!res.seq.keep[p][s] && higher.seq.keep[p][s]) return false;
                        }
                        note = "1000 random sequences";
                        return true;
                      }});

  criteria.push_back({4, "rope properties (relative position, norm, composition, origin)", 10.0,
                      [](std::string& note) {
                        const SuiteResult suite = suites::rope2d(7);
                        long checks = 0;
                        for (const auto& p : suite.properties) checks += p.checks;
                        char buf[64];
                        std::snprintf(buf, sizeof(buf), "%ld checks across %zu properties", checks,
                                      suite.properties.size());
                        note = buf;
                        return suite.failures() == 0;
                      }});

  criteria.push_back({5, "gradients of encoder, projector, and fused decoder vs central differences",
                      60.0, [](std::string& note) {
                        const GradCheckResult enc = encoder_gradcheck(41, 20);
                        const GradCheckResult proj = projector_gradcheck(42);
                        const GradCheckResult dec = decoder_gradcheck(43);
                        const GradCheckResult all = composite_gradcheck(44);
                        char buf[160];
                        std::snprintf(buf, sizeof(buf),
                                      "max rel err: encoder %.2e, projector %.2e, decoder %.2e, composite %.2e",
                                      enc.max_rel_err, proj.max_rel_err, dec.max_rel_err,
                                      all.max_rel_err);
                        note = buf;
                        return enc.max_rel_err < 1e-5 && proj.max_rel_err < 1e-5 &&
                               dec.max_rel_err < 1e-5 && all.max_rel_err < 1e-5;
                      }});

  criteria.push_back({6, "decoder causality, bitwise under future perturbations", 10.0,
                      [](std::string& note) {
                        Rng rng(substream_seed(13, 6));
                        const DecoderConfig config{2, 12, 24, 2, tok::kVocab, 32};
                        const DecoderParams params = init_decoder(config, 13);
                        for (int probe = 0; probe < 100; ++probe) {
                          Matrix visual(rng.uniform_int(1, 3), config.d_model);
                          for (double& x : visual.data) x = rng.normal();
                          std::vector<int> ids = {tok::kBos, tok::kImage};
                          for (int i = rng.uniform_int(1, 5); i > 0; --i)
                            ids.push_back(rng.uniform_int(0, 255));
                          const MixedSequence seq = assemble(ids, visual, {}, params);
                          const Matrix base = decoder_forward(seq, params);
                          const int cut = rng.uniform_int(0, seq.length() - 2);
                          MixedSequence perturbed = seq;
                          for (int t = cut + 1; t < seq.length(); ++t)
                            perturbed.embeddings.at(t, rng.uniform_int(0, config.d_model - 1)) +=
                                rng.normal();
                          const Matrix mod = decoder_forward(perturbed, params);
                          for (int t = 0; t <= cut; ++t)
                            for (int v = 0; v < base.cols; ++v)
                              if (base.at(t, v) != mod.at(t, v)) return false;
                        }
                        note = "100 probes";
                        return true;
                      }});

  criteria.push_back({7, "toy autoregression halves the copy-task loss, reproducibly", 300.0,
                      [](std::string& note) {
                        CopyTaskConfig config;
                        const std::vector<double> losses = train_copy_task(config, 321);
                        const std::vector<double> again = train_copy_task(config, 321);
                        char buf[96];
                        std::snprintf(buf, sizeof(buf), "loss %.4f -> %.4f (ln 260 = %.4f)",
                                      losses.front(), losses.back(), std::log(260.0));
                        note = buf;
                        return close(losses.front(), std::log(260.0), 0.05 * std::log(260.0)) &&
                               losses.back() <= 0.5 * losses.front() && losses == again;
                      }});

  criteria.push_back({8, "projector equation conformance and reference-scale instantiation", 5.0,
                      [](std::string& note) {
                        Rng rng(substream_seed(55, 8));
                        for (int t = 0; t < 100; ++t) {
                          const ProjectorParams p =
                              init_projector(8, 16, 12, substream_seed(55, static_cast<std::uint64_t>(t)));
                          Matrix h(rng.uniform_int(1, 6), 8);
                          for (double& x : h.data) x = rng.normal();
                          const Matrix got = project(h, p);
                          Matrix z = matmul(h, transpose(p.w1));
                          for (int r = 0; r < z.rows; ++r)
                            for (int c = 0; c < z.cols; ++c)
                              z.at(r, c) = gelu(z.at(r, c) + p.b1[static_cast<std::size_t>(c)]);
                          Matrix want = matmul(z, transpose(p.w2));
                          for (int r = 0; r < want.rows; ++r)
                            for (int c = 0; c < want.cols; ++c)
                              want.at(r, c) += p.b2[static_cast<std::size_t>(c)];
                          if (max_abs_diff(got, want) >= 1e-12) return false;
                        }
                        const ProjectorParams big = init_projector(1152, 4304, 3584, 1);
                        Matrix row(1, 1152);
                        for (double& x : row.data) x = rng.normal();
                        const Matrix out = project(row, big);
                        note = "100 oracle instances; 1152 -> 4304 -> 3584 forward row";
                        return out.cols == 3584 && all_finite(out);
                      }});

  criteria.push_back({9, "one code path: correct H_proj width for image, volume, and video", 10.0,
                      [](std::string& note) {
                        bool ok = true;
                        for (SourceKind kind :
                             {SourceKind::Image2D, SourceKind::Volume3D, SourceKind::Video}) {
                          const auto input =
                              constant_input(kind, kind == SourceKind::Image2D ? 1 : 4, 64, 64, 0.4);
                          const PipelineRun run = run_pipeline_on(input, desk_config(kind));
                          const auto& j = run.report_json;
                          ok = ok && j["projector_output_shape"][1] == 12 &&
                               j["encoder_output_shape"][1] == 8 &&
                               j["projector_output_shape"][0] == j["tokens_after_prune"] &&
                               (kind == SourceKind::Image2D
                                    ? j["tokens_after_merge"] == j["tokens_before"]
                                    : j["tokens_after_merge"].get<long>() * 4 ==
                                          j["tokens_before"].get<long>());
                        }
                        note = "report fields agree for all three kinds";
                        return ok;
                      }});

  int failed = 0;
  for (const auto& criterion : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string note;
    bool ok = false;
    try {
      ok = criterion.body(note);
    } catch (const std::exception& e) {
      note = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = elapsed < criterion.limit_s;
    if (!ok || !in_budget) ++failed;
    std::printf("[%s] %d. %s — %s (%.2fs of %.0fs budget)\n",
                ok && in_budget ? "PASS" : "FAIL", criterion.id, criterion.label.c_str(),
                note.c_str(), elapsed, criterion.limit_s);
  }
  if (failed) std::printf("%d criterion(s) failed\n", failed);
  return failed == 0 ? 0 : 1;
}
