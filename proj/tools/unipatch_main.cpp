// SPDX-License-Identifier: Apache-2.0
//
// unipatch: run the unified visual-token pipeline on an image, volume, or
// video; sweep tau for the pruning ablation; generate calibrated synthetic
// corpora; or train the toy copy task. Emits JSON reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unipatch/fusion.hpp"
#include "unipatch/pipeline.hpp"
#include "unipatch/synth.hpp"

namespace {

unipatch::SourceKind parse_kind(const std::string& kind) {
  if (kind == "image") return unipatch::SourceKind::Image2D;
  if (kind == "volume") return unipatch::SourceKind::Volume3D;
  if (kind == "video") return unipatch::SourceKind::Video;
  throw unipatch::ConfigError("unknown kind '" + kind + "' (expected image|volume|video)");
}

unipatch::MergeMode parse_merge(const std::string& merge) {
  if (merge == "auto") return unipatch::MergeMode::Auto;
  if (merge == "on") return unipatch::MergeMode::On;
  if (merge == "off") return unipatch::MergeMode::Off;
  throw unipatch::ConfigError("unknown merge mode '" + merge + "' (expected auto|on|off)");
}

// "layers,d,heads", e.g. "2,64,4".
unipatch::EncoderConfig parse_desk_config(const std::string& text) {
  int layers = 0, d = 0, heads = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d%c", &layers, &d, &heads, &tail) != 3)
    throw unipatch::ConfigError("bad --desk-config '" + text + "' (expected layers,d,heads)");
  unipatch::EncoderConfig config{layers, d, 4 * d, heads};
  config.validate();
  return config;
}

// "kind:redundancy:planes:HxW", e.g. "video:0.629:8:224x320".
unipatch::SynthSpec parse_synth_spec(const std::string& text, double tau, int patch) {
  unipatch::SynthSpec spec;
  spec.tau = tau;
  spec.patch = patch;
  const auto parts = [&] {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
      if (c == ':') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    out.push_back(cur);
    return out;
  }();
  if (parts.size() != 4)
    throw unipatch::ConfigError("bad --gen-synthetic '" + text +
                                "' (expected kind:redundancy:planes:HxW)");
  spec.kind = parse_kind(parts[0]);
  try {
    spec.redundancy = std::stod(parts[1]);
    spec.planes = std::stoi(parts[2]);
  } catch (const std::exception&) {
    throw unipatch::ConfigError("bad numbers in --gen-synthetic '" + text + "'");
  }
  char tail = 0;
  if (std::sscanf(parts[3].c_str(), "%dx%d%c", &spec.height, &spec.width, &tail) != 2)
    throw unipatch::ConfigError("bad dims in --gen-synthetic '" + text + "' (expected HxW)");
  return spec;
}

void emit(const nlohmann::ordered_json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw unipatch::InputError("cannot write " + out_path);
  out << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unified visual-token pipeline: token budgets, pruning rates, tau sweeps"};
  app.get_formatter()->column_width(34);

  std::string input_path, kind_str = "image", merge_str = "auto", out_path;
  std::string bench_taus, synth_spec_str, desk_config_str = "2,64,4";
  double tau = 0.1;
  int patch = 16, stride = 1;
  std::uint64_t seed = 0;
  bool copy_task = false;

  app.add_option("--input", input_path, "input path (P5 image, raw volume, or frame directory)");
  app.add_option("--kind", kind_str, "input kind: image|volume|video")->capture_default_str();
  app.add_option("--tau", tau, "inter-plane pruning threshold")->capture_default_str();
  app.add_option("--patch", patch, "patch size in pixels")->capture_default_str();
  app.add_option("--stride", stride, "video frame sampling stride")->capture_default_str();
  app.add_option("--seed", seed, "seed for all weight init")->capture_default_str();
  app.add_option("--out", out_path, "write the JSON report here instead of stdout");
  app.add_option("--merge", merge_str, "2x2 merge gate: auto|on|off")->capture_default_str();
  app.add_option("--bench-tau", bench_taus, "comma-separated tau grid to sweep");
  app.add_option("--gen-synthetic", synth_spec_str,
                 "write a calibrated corpus: kind:redundancy:planes:HxW (needs --out)");
  app.add_option("--desk-config", desk_config_str, "encoder config as layers,d,heads")
      ->capture_default_str();
  app.add_flag("--copy-task", copy_task, "train the toy decoder copy task and emit its loss curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << e.what() << "\n";
    return static_cast<int>(unipatch::ExitCode::Config);
  }

  try {
    if (!synth_spec_str.empty()) {
      if (out_path.empty())
        throw unipatch::ConfigError("--gen-synthetic requires --out for the corpus location");
      const unipatch::SynthSpec spec = parse_synth_spec(synth_spec_str, tau, patch);
      const unipatch::SynthSummary summary = unipatch::gen_synthetic(spec, seed, out_path);
      nlohmann::ordered_json j;
      j["kind"] = unipatch::source_kind_name(spec.kind);
      j["planes"] = summary.planes;
      j["height"] = summary.height;
      j["width"] = summary.width;
      j["sites_per_plane"] = summary.sites;
      j["redundant_sites_per_pair"] = summary.redundant_per_pair;
      j["expected_rate"] = summary.expected_rate();
      j["path"] = summary.path;
      std::cout << j.dump(2) << "\n";
      return static_cast<int>(unipatch::ExitCode::Ok);
    }

    if (copy_task) {
      unipatch::CopyTaskConfig config;
      const std::vector<double> losses = unipatch::train_copy_task(config, seed);
      nlohmann::ordered_json j;
      j["steps"] = config.steps;
      j["lr"] = config.lr;
      j["loss_curve"] = losses;
      emit(j, out_path);
      return static_cast<int>(unipatch::ExitCode::Ok);
    }

    if (input_path.empty()) throw unipatch::ConfigError("--input is required");

    unipatch::PipelineConfig config;
    config.input_path = input_path;
    config.kind = parse_kind(kind_str);
    config.patch = patch;
    config.merge = parse_merge(merge_str);
    config.tau = tau;
    config.stride = stride;
    config.encoder = parse_desk_config(desk_config_str);
    config.d_hidden = 2 * config.encoder.d_model;
    config.d_llm = std::max(10, (3 * config.encoder.d_model) / 2);
    config.seed = seed;
    config.validate();

    if (!bench_taus.empty()) {
      std::vector<double> grid;
      std::string cur;
      for (char c : bench_taus + ",") {
        if (c == ',') {
          if (!cur.empty()) grid.push_back(std::stod(cur));
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
      const unipatch::VisualInput input = unipatch::load_input(config.input_path, config.kind);
      emit(unipatch::bench_tau(input, config, grid), out_path);
      return static_cast<int>(unipatch::ExitCode::Ok);
    }

    const unipatch::PipelineRun run = unipatch::run_pipeline(config);
    emit(run.report_json, out_path);
    return static_cast<int>(unipatch::ExitCode::Ok);
  } catch (const unipatch::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return static_cast<int>(unipatch::ExitCode::Input);
  } catch (const unipatch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return static_cast<int>(unipatch::ExitCode::Config);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return static_cast<int>(unipatch::ExitCode::Internal);
  }
}
