// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "unipatch/checkpoint.hpp"
#include "unipatch/fusion.hpp"
#include "unipatch/probes.hpp"
#include "test_util.hpp"

using namespace unipatch;

namespace {

// Independent decoder reimplementation: per-position vectors and plain loops.
std::vector<std::vector<double>> oracle_decoder(const MixedSequence& seq,
                                                const DecoderParams& params) {
  const int t_total = seq.length();
  const int d = params.config.d_model;
  const int heads = params.config.heads;
  const int hd = d / heads;
  using Row = std::vector<double>;
  std::vector<Row> x(static_cast<std::size_t>(t_total), Row(static_cast<std::size_t>(d)));
  for (int t = 0; t < t_total; ++t)
    for (int j = 0; j < d; ++j)
      x[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] =
          seq.embeddings.at(t, j) + params.pos.at(t, j);

  auto layer_norm_row = [&](const Row& row, const Vec& gain, const Vec& bias) {
    double mean = 0.0, var = 0.0;
    for (double v : row) mean += v / d;
    for (double v : row) var += (v - mean) * (v - mean) / d;
    Row out(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(j)] =
          gain[static_cast<std::size_t>(j)] * (row[static_cast<std::size_t>(j)] - mean) /
              std::sqrt(var + 1e-6) +
          bias[static_cast<std::size_t>(j)];
    return out;
  };
  auto linear = [&](const Row& row, const Matrix& w, const Vec& b) {
    Row out(static_cast<std::size_t>(w.rows));
    for (int o = 0; o < w.rows; ++o) {
      double acc = b[static_cast<std::size_t>(o)];
      for (int j = 0; j < w.cols; ++j) acc += w.at(o, j) * row[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(o)] = acc;
    }
    return out;
  };

  for (const BlockParams& bp : params.blocks) {
    std::vector<Row> q(x.size()), k(x.size()), v(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
      const Row n1 = layer_norm_row(x[t], bp.ln1_gain, bp.ln1_bias);
      q[t] = linear(n1, bp.wq, bp.bq);
      k[t] = linear(n1, bp.wk, bp.bk);
      v[t] = linear(n1, bp.wv, bp.bv);
    }
    std::vector<Row> attn(x.size(), Row(static_cast<std::size_t>(d), 0.0));
    for (std::size_t t = 0; t < x.size(); ++t)
      for (int h = 0; h < heads; ++h) {
        std::vector<double> scores(t + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= t; ++j) {
          double s = 0.0;
          for (int c = 0; c < hd; ++c)
            s += q[t][static_cast<std::size_t>(h * hd + c)] * k[j][static_cast<std::size_t>(h * hd + c)];
          scores[j] = s / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (double s : scores) z += std::exp(s - mx);
        for (std::size_t j = 0; j <= t; ++j) {
          const double w = std::exp(scores[j] - mx) / z;
          for (int c = 0; c < hd; ++c)
            attn[t][static_cast<std::size_t>(h * hd + c)] += w * v[j][static_cast<std::size_t>(h * hd + c)];
        }
      }
    for (std::size_t t = 0; t < x.size(); ++t) {
      const Row o = linear(attn[t], bp.wo, bp.bo);
      for (int j = 0; j < d; ++j) x[t][static_cast<std::size_t>(j)] += o[static_cast<std::size_t>(j)];
      const Row n2 = layer_norm_row(x[t], bp.ln2_gain, bp.ln2_bias);
      Row up = linear(n2, bp.w_up, bp.b_up);
      for (double& u : up) u = u * 0.5 * (1.0 + std::erf(u * (1.0 / std::sqrt(2.0))));
      const Row down = linear(up, bp.w_down, bp.b_down);
      for (int j = 0; j < d; ++j) x[t][static_cast<std::size_t>(j)] += down[static_cast<std::size_t>(j)];
    }
  }

  std::vector<Row> logits(x.size(), Row(static_cast<std::size_t>(params.config.vocab)));
  for (std::size_t t = 0; t < x.size(); ++t) {
    const Row fin = layer_norm_row(x[t], params.lnf_gain, params.lnf_bias);
    for (int w = 0; w < params.config.vocab; ++w) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += fin[static_cast<std::size_t>(j)] * params.embed.at(w, j);
      logits[t][static_cast<std::size_t>(w)] = acc;
    }
  }
  return logits;
}

}  // namespace

TEST_CASE("tokenizer stub round trips byte strings") {
  CHECK(tok::decode(tok::encode("")) == "");
  CHECK(tok::decode(tok::encode("hello, 57?")) == "hello, 57?");
  std::string all;
  for (int b = 0; b < 256; ++b) all.push_back(static_cast<char>(b));
  CHECK(tok::decode(tok::encode(all)) == all);
  CHECK(tok::decode({'o', 'k', tok::kEos, tok::kPad}) == "ok");
}

TEST_CASE("assemble splices the visual span at the placeholder") {
  const DecoderConfig config{1, 12, 24, 2, tok::kVocab, 64};
  const DecoderParams params = init_decoder(config, 1);

  SECTION("empty text, visual only") {
    Matrix visual(5, 12, 0.5);
    const MixedSequence seq = assemble({tok::kImage}, visual, {}, params);
    CHECK(seq.length() == 5);
    for (const auto& s : seq.segments) CHECK(s.kind == Segment::Kind::Visual);
  }
  SECTION("text only, empty visual") {
    const MixedSequence seq = assemble({'a', tok::kImage, 'b', 'c'}, Matrix(0, 0), {}, params);
    CHECK(seq.length() == 3);
    for (const auto& s : seq.segments) CHECK(s.kind == Segment::Kind::Text);
    CHECK(seq.token_ids == std::vector<int>{'a', 'b', 'c'});
  }
  SECTION("question layout with 49 visual tokens") {
    std::vector<int> ids = tok::encode("Q: ");
    const std::size_t placeholder_at = ids.size();
    ids.push_back(tok::kImage);
    for (int id : tok::encode(" ?")) ids.push_back(id);
    Matrix visual(49, 12, 0.1);
    const MixedSequence seq = assemble(ids, visual, {}, params);
    CHECK(seq.length() == static_cast<int>(ids.size()) - 1 + 49);
    for (int t = 0; t < seq.length(); ++t) {
      const bool in_span = t >= static_cast<int>(placeholder_at) &&
                           t < static_cast<int>(placeholder_at) + 49;
      CHECK((seq.segments[static_cast<std::size_t>(t)].kind == Segment::Kind::Visual) == in_span);
    }
  }
  SECTION("provenance travels with the visual rows") {
    Matrix visual(2, 12, 0.0);
    const std::vector<VisualProvenance> prov{{0, 3, 4}, {1, 0, 2}};
    const MixedSequence seq = assemble({tok::kBos, tok::kImage}, visual, prov, params);
    CHECK(seq.segments[1].plane == 0);
    CHECK(seq.segments[1].m == 3);
    CHECK(seq.segments[2].plane == 1);
    CHECK(seq.segments[2].n == 2);
  }
  SECTION("missing or duplicate placeholder is rejected") {
    CHECK_THROWS_AS(assemble({'a', 'b'}, Matrix(1, 12), {}, params), ConfigError);
    CHECK_THROWS_AS(assemble({tok::kImage, tok::kImage}, Matrix(1, 12), {}, params), ConfigError);
  }
  SECTION("visual width mismatch is rejected") {
    CHECK_THROWS_AS(assemble({tok::kImage}, Matrix(2, 8), {}, params), ShapeError);
  }
}

TEST_CASE("decoder causality is bitwise") {
  const DecoderConfig config{2, 12, 24, 2, tok::kVocab, 32};
  const DecoderParams params = init_decoder(config, 9);
  Rng rng(10);
  Matrix visual(3, 12);
  for (double& x : visual.data) x = rng.normal();
  const MixedSequence seq = assemble({tok::kBos, tok::kImage, 'x', 'y', tok::kEos}, visual, {}, params);
  const Matrix base = decoder_forward(seq, params);

  for (int cut = 0; cut + 1 < seq.length(); ++cut) {
    MixedSequence perturbed = seq;
    for (int t = cut + 1; t < seq.length(); ++t)
      for (int j = 0; j < 12; ++j) perturbed.embeddings.at(t, j) += rng.normal();
    const Matrix mod = decoder_forward(perturbed, params);
    for (int t = 0; t <= cut; ++t)
      for (int v = 0; v < base.cols; ++v) REQUIRE(base.at(t, v) == mod.at(t, v));
  }
}

TEST_CASE("length-one sequence depends on its single embedding") {
  const DecoderConfig config{2, 12, 24, 2, tok::kVocab, 32};
  const DecoderParams params = init_decoder(config, 14);
  const MixedSequence seq = assemble({'z', tok::kImage}, Matrix(0, 0), {}, params);
  REQUIRE(seq.length() == 1);
  const Matrix logits = decoder_forward(seq, params);
  CHECK(logits.rows == 1);
  CHECK(logits.cols == tok::kVocab);
}

TEST_CASE("two-layer decoder against the unrolled oracle") {
  const DecoderConfig config{2, 12, 24, 2, tok::kVocab, 32};
  const DecoderParams params = init_decoder(config, 33);
  Rng rng(34);
  Matrix visual(2, 12);
  for (double& x : visual.data) x = rng.normal();
  const MixedSequence seq = assemble({tok::kBos, tok::kImage, 'a', 'b'}, visual, {}, params);
  const Matrix got = decoder_forward(seq, params);
  const auto want = oracle_decoder(seq, params);
  double worst = 0.0;
  for (int t = 0; t < got.rows; ++t)
    for (int v = 0; v < got.cols; ++v)
      worst = std::max(worst, std::abs(got.at(t, v) - want[static_cast<std::size_t>(t)][static_cast<std::size_t>(v)]));
  CHECK(worst < 1e-10);
}

TEST_CASE("decoder rejects over-length sequences") {
  const DecoderConfig config{1, 12, 24, 2, tok::kVocab, 4};
  const DecoderParams params = init_decoder(config, 2);
  const MixedSequence seq = assemble({'a', 'b', 'c', 'd', tok::kImage, 'e'}, Matrix(0, 0), {}, params);
  CHECK_THROWS_AS(decoder_forward(seq, params), ShapeError);
}

TEST_CASE("analytic decoder gradients match central differences") {
  const GradCheckResult res = decoder_gradcheck(555);
  INFO("checked " << res.params << " parameters");
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("full composite gradient matches central differences") {
  const GradCheckResult res = composite_gradcheck(777);
  INFO("checked " << res.params << " parameters");
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("copy task learns and reproduces bit-exactly") {
  CopyTaskConfig config;
  const std::vector<double> losses = train_copy_task(config, 123);
  REQUIRE(losses.size() == static_cast<std::size_t>(config.steps) + 1);
  // Untrained loss sits at the uniform-logit expectation ln(260) within 5%.
  CHECK(losses[0] == Catch::Approx(std::log(260.0)).epsilon(0.05));
  CHECK(losses.back() <= 0.5 * losses[0]);
  for (double l : losses) CHECK(std::isfinite(l));

  const std::vector<double> again = train_copy_task(config, 123);
  CHECK(losses == again);
  const std::vector<double> other = train_copy_task(config, 124);
  CHECK(losses != other);
}

TEST_CASE("decoder and projector share the checkpoint format") {
  ScratchDir dir;
  DecoderParams dec = init_decoder(DecoderConfig{1, 12, 24, 2, tok::kVocab, 16}, 3);
  ProjectorParams proj = init_projector(8, 16, 12, 4);
  std::vector<TensorRef> refs = named_tensors(dec);
  for (auto& r : named_tensors(proj)) refs.push_back(r);
  const Vec original = flatten(refs);
  save_checkpoint(dir.file("fused"), refs);

  DecoderParams dec2 = init_decoder(DecoderConfig{1, 12, 24, 2, tok::kVocab, 16}, 30);
  ProjectorParams proj2 = init_projector(8, 16, 12, 40);
  std::vector<TensorRef> refs2 = named_tensors(dec2);
  for (auto& r : named_tensors(proj2)) refs2.push_back(r);
  load_checkpoint(dir.file("fused"), refs2);
  CHECK(flatten(refs2) == original);
}
