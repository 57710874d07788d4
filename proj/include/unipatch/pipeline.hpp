// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end pipeline: decompose -> patchify -> embed -> reduce -> encode ->
// project, plus the tau-sweep bench. One code path for every modality; the
// merge gate is the only kind-dependent step and it lives in tokred.

#include <chrono>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "unipatch/encoder.hpp"
#include "unipatch/io.hpp"
#include "unipatch/projector.hpp"
#include "unipatch/tokred.hpp"

namespace unipatch {

struct PipelineConfig {
  std::string input_path;
  SourceKind kind = SourceKind::Image2D;
  int patch = 16;
  MergeMode merge = MergeMode::Auto;
  double tau = 0.1;
  int stride = 1;
  EncoderConfig encoder{2, 64, 256, 4};
  int d_hidden = 128;
  int d_llm = 96;
  std::uint64_t seed = 0;

  void validate() const {
    if (patch < 1) throw ConfigError("patch size must be >= 1");
    if (tau < 0.0) throw ConfigError("tau must be >= 0");
    if (stride < 1) throw ConfigError("frame stride must be >= 1");
    if (d_hidden < 1 || d_llm < 1) throw ConfigError("projector sizes must be >= 1");
    encoder.validate();
  }
};

struct PipelineRun {
  ReductionReport report;
  PrunedSequence pruned;
  Matrix h_v;
  Matrix h_proj;
  nlohmann::ordered_json report_json;
};

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Runs everything downstream of file loading on an in-memory input.
inline PipelineRun run_pipeline_on(const VisualInput& input, const PipelineConfig& config,
                                   double load_ms = 0.0) {
  config.validate();
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  auto t0 = clock::now();
  RawPlaneSequence raw = decompose(input, config.stride);
  const double decompose_ms = detail::ms_since(t0);

  t0 = clock::now();
  EncoderParams enc_params = init_params(config.encoder, config.seed, config.patch);
  PlaneSequence embedded = embed_sequence(raw, enc_params.w_embed, enc_params.b_embed, config.patch);
  const double embed_ms = detail::ms_since(t0);

  t0 = clock::now();
  PruneResult reduced = reduce_pipeline(embedded, config.tau, config.merge);
  const double reduce_ms = detail::ms_since(t0);

  t0 = clock::now();
  RopeTable rope = make_rope(config.encoder);
  Matrix h_v = encoder_forward(reduced.seq, enc_params, rope);
  const double encode_ms = detail::ms_since(t0);

  t0 = clock::now();
  ProjectorParams proj_params =
      init_projector(config.encoder.d_model, config.d_hidden, config.d_llm,
                     substream_seed(config.seed, 0x9107));
  Matrix h_proj = project(h_v, proj_params);
  const double project_ms = detail::ms_since(t0);

  const int grid_h = embedded.planes.empty() ? 0 : embedded.planes[0].grid_h;
  const int grid_w = embedded.planes.empty() ? 0 : embedded.planes[0].grid_w;

  PipelineRun run;
  run.report = reduced.report;
  run.pruned = std::move(reduced.seq);

  nlohmann::ordered_json j;
  j["input_kind"] = source_kind_name(input.kind);
  j["planes"] = static_cast<int>(embedded.planes.size());
  j["grid"] = {grid_h, grid_w};
  j["tokens_before"] = run.report.total_before;
  j["tokens_after_merge"] = run.report.stage2_input();
  j["tokens_after_prune"] = run.report.total_after;
  j["rate"] = run.report.rate;
  j["tau"] = run.report.tau;
  j["encoder_output_shape"] = {h_v.rows, h_v.cols};
  j["projector_output_shape"] = {h_proj.rows, h_proj.cols};
  j["timings_ms"] = {{"load", load_ms},
                     {"decompose", decompose_ms},
                     {"embed", embed_ms},
                     {"reduce", reduce_ms},
                     {"encode", encode_ms},
                     {"project", project_ms},
                     {"total", load_ms + detail::ms_since(t_start)}};
  run.report_json = std::move(j);
  run.h_v = std::move(h_v);
  run.h_proj = std::move(h_proj);
  return run;
}

inline PipelineRun run_pipeline(const PipelineConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  VisualInput input = load_input(config.input_path, config.kind);
  const double load_ms = detail::ms_since(t0);
  return run_pipeline_on(input, config, load_ms);
}

// Tau sweep: pruning rate plus mean L2 drift of the encoder output on kept
// positions relative to the tau = 0 run. Rates must be monotone nondecreasing
// in tau; a violation is an internal invariant failure.
inline nlohmann::ordered_json bench_tau(const VisualInput& input, const PipelineConfig& config,
                                        const std::vector<double>& tau_grid) {
  if (tau_grid.empty()) throw ConfigError("bench-tau: empty tau grid");
  PipelineConfig base = config;
  base.tau = 0.0;
  PipelineRun baseline = run_pipeline_on(input, base);

  std::map<std::tuple<int, int, int>, int> baseline_row;
  {
    const auto refs = baseline.pruned.kept_refs();
    for (std::size_t i = 0; i < refs.size(); ++i)
      baseline_row[{refs[i].plane, refs[i].m, refs[i].n}] = static_cast<int>(i);
  }

  nlohmann::ordered_json out;
  out["input_kind"] = source_kind_name(input.kind);
  out["baseline_tau"] = 0.0;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  double prev_rate = -1.0;
  for (double tau : tau_grid) {
    PipelineConfig cfg = config;
    cfg.tau = tau;
    PipelineRun run = run_pipeline_on(input, cfg);
    if (run.report.rate + 1e-15 < prev_rate)
      throw std::logic_error("bench-tau: pruning rate decreased as tau grew");
    prev_rate = run.report.rate;

    double drift = 0.0;
    const auto refs = run.pruned.kept_refs();
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto it = baseline_row.find({refs[i].plane, refs[i].m, refs[i].n});
      if (it == baseline_row.end())
        throw std::logic_error("bench-tau: token kept at tau > 0 but absent from the tau = 0 run");
      double acc = 0.0;
      for (int j = 0; j < run.h_v.cols; ++j) {
        const double d = run.h_v.at(static_cast<int>(i), j) - baseline.h_v.at(it->second, j);
        acc += d * d;
      }
      drift += std::sqrt(acc);
    }
    if (!refs.empty()) drift /= static_cast<double>(refs.size());

    rows.push_back({{"tau", tau}, {"rate", run.report.rate}, {"drift", drift}});
  }
  out["rows"] = std::move(rows);
  return out;
}

}  // namespace unipatch
