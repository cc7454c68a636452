#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "qamatch/encoder.hpp"
#include "qamatch/errors.hpp"
#include "qamatch/ops.hpp"

using namespace qamatch;
using qamatch::testing::random_tensor;

namespace {

// Plain nested-vector reference math, no tape involved.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat plus_bias(Mat m, const Tensor& b) {
  for (auto& row : m)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  return m;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

Mat norm(Mat m, const Tensor& g, const Tensor& b) {
  for (auto& row : m) {
    double mu = 0, var = 0;
    for (double x : row) mu += x;
    mu /= static_cast<double>(row.size());
    for (double x : row) var += (x - mu) * (x - mu);
    var /= static_cast<double>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = g[j] * (row[j] - mu) / std::sqrt(var + 1e-6) + b[j];
  }
  return m;
}

// Single-head layer; queries from `x`, keys/values from `kv` with `kv_mask`.
Mat ref_layer(const Mat& x, const Mat& kv, const std::vector<std::uint8_t>& kv_mask, const EncoderLayerParams& p) {
  const Mat q = plus_bias(mm(x, to_mat(p.attn.query_w)), p.attn.query_b);
  const Mat k = plus_bias(mm(kv, to_mat(p.attn.key_w)), p.attn.key_b);
  const Mat v = plus_bias(mm(kv, to_mat(p.attn.value_w)), p.attn.value_b);
  const double scale = 1.0 / std::sqrt(static_cast<double>(x[0].size()));
  Mat ctx(x.size(), std::vector<double>(x[0].size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> w(kv.size(), 0.0);
    double total = 0;
    for (std::size_t j = 0; j < kv.size(); ++j) {
      if (!kv_mask[j]) continue;
      double s = 0;
      for (std::size_t c = 0; c < q[i].size(); ++c) s += q[i][c] * k[j][c];
      w[j] = std::exp(s * scale);
      total += w[j];
    }
    for (std::size_t j = 0; j < kv.size(); ++j)
      for (std::size_t c = 0; c < v[j].size(); ++c) ctx[i][c] += w[j] / total * v[j][c];
  }
  const Mat attended = plus_bias(mm(ctx, to_mat(p.attn.out_w)), p.attn.out_b);
  const Mat h = norm(plus(x, attended), p.norm1_gain, p.norm1_bias);
  Mat inner = plus_bias(mm(h, to_mat(p.ffn_in_w)), p.ffn_in_b);
  for (auto& row : inner)
    for (double& e : row) e = std::max(0.0, e);
  const Mat ffn = plus_bias(mm(inner, to_mat(p.ffn_out_w)), p.ffn_out_b);
  return norm(plus(h, ffn), p.norm2_gain, p.norm2_bias);
}

Mat stack(const Mat& a, const Mat& b) {
  Mat out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

template <class T>
std::vector<T> cat(std::vector<T> a, const std::vector<T>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

double max_diff(const Tensor& t, const Mat& m) {
  double worst = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) worst = std::max(worst, std::abs(t.at(i, j) - m[i][j]));
  return worst;
}

EncoderConfig small_cfg(EncoderMode mode, std::size_t dim = 4, std::size_t layers = 1, std::size_t heads = 1) {
  EncoderConfig cfg;
  cfg.dim = dim;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.ffn_dim = 2 * dim;
  cfg.mode = mode;
  return cfg;
}

std::vector<EncoderLayerParams> random_layers(const EncoderConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, {});
  std::vector<EncoderLayerParams> layers;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    auto p = EncoderLayerParams::init(cfg, rng);
    // non-trivial biases and norm parameters so the oracle covers them
    for (Tensor* t : {&p.attn.query_b, &p.attn.key_b, &p.attn.value_b, &p.attn.out_b, &p.norm1_bias, &p.ffn_in_b,
                      &p.ffn_out_b, &p.norm2_bias})
      fill_uniform(*t, rng, 0.3);
    for (double& g : p.norm1_gain.data()) g += 0.2;
    layers.push_back(std::move(p));
  }
  return layers;
}

}  // namespace

TEST_CASE("single-layer encoders match a straight-line evaluation") {
  std::mt19937_64 rng(5);
  const auto cfg_s = small_cfg(EncoderMode::Siamese);
  const auto layers = random_layers(cfg_s, 11);
  const Tensor xq = random_tensor(rng, {3, 4}, -1, 1), xa = random_tensor(rng, {4, 4}, -1, 1);
  const std::vector<std::uint8_t> mq = {1, 1, 0}, ma = {1, 1, 1, 0};

  Tape tape(false);
  const TokenStates q{tape.constant(xq), mq}, a{tape.constant(xa), ma};

  SUBCASE("siamese") {
    auto [oq, oa] = encode_siamese(q, a, cfg_s, layers);
    CHECK(max_diff(oq.states.value(), ref_layer(to_mat(xq), to_mat(xq), mq, layers[0])) < 1e-12);
    CHECK(max_diff(oa.states.value(), ref_layer(to_mat(xa), to_mat(xa), ma, layers[0])) < 1e-12);
  }
  SUBCASE("crossed") {
    auto [oq, oa] = encode_crossed(q, a, small_cfg(EncoderMode::Crossed), layers);
    const Mat rq = ref_layer(to_mat(xq), stack(to_mat(xq), to_mat(xa)), cat(mq, ma), layers[0]);
    const Mat ra = ref_layer(to_mat(xa), stack(to_mat(xa), to_mat(xq)), cat(ma, mq), layers[0]);
    CHECK(max_diff(oq.states.value(), rq) < 1e-12);
    CHECK(max_diff(oa.states.value(), ra) < 1e-12);
  }
}

TEST_CASE("two-layer crossed encoder with last-layer schedule") {
  std::mt19937_64 rng(8);
  auto cfg = small_cfg(EncoderMode::Crossed, 4, 2);
  cfg.cross = CrossSchedule::LastLayer;
  const auto layers = random_layers(cfg, 3);
  const Tensor xq = random_tensor(rng, {3, 4}, -1, 1), xa = random_tensor(rng, {3, 4}, -1, 1);
  const std::vector<std::uint8_t> mq = {1, 1, 1}, ma = {1, 1, 0};
  Tape tape(false);
  auto [oq, oa] = encode_crossed({tape.constant(xq), mq}, {tape.constant(xa), ma}, cfg, layers);

  const Mat q1 = ref_layer(to_mat(xq), to_mat(xq), mq, layers[0]);
  const Mat a1 = ref_layer(to_mat(xa), to_mat(xa), ma, layers[0]);
  CHECK(max_diff(oq.states.value(), ref_layer(q1, stack(q1, a1), cat(mq, ma), layers[1])) < 1e-12);
  CHECK(max_diff(oa.states.value(), ref_layer(a1, stack(a1, q1), cat(ma, mq), layers[1])) < 1e-12);
}

TEST_CASE("multi-head attention equals per-head reference with split projections") {
  // With 2 heads of width 2 the output equals concatenating two single-head
  // attentions computed on column slices. Check against a hand expansion.
  std::mt19937_64 rng(21);
  const auto cfg = small_cfg(EncoderMode::Siamese, 4, 1, 2);
  const auto layers = random_layers(cfg, 4);
  const Tensor x = random_tensor(rng, {3, 4}, -1, 1);
  const std::vector<std::uint8_t> mask = {1, 1, 0};
  Tape tape(false);
  const Tensor out = encode_self({tape.constant(x), mask}, cfg, layers).states.value();

  const auto& p = layers[0];
  const Mat X = to_mat(x);
  const Mat q = plus_bias(mm(X, to_mat(p.attn.query_w)), p.attn.query_b);
  const Mat k = plus_bias(mm(X, to_mat(p.attn.key_w)), p.attn.key_b);
  const Mat v = plus_bias(mm(X, to_mat(p.attn.value_w)), p.attn.value_b);
  Mat ctx(3, std::vector<double>(4, 0.0));
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 3; ++i) {
      double w[3] = {0, 0, 0}, total = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        if (!mask[j]) continue;
        const double s = q[i][2 * h] * k[j][2 * h] + q[i][2 * h + 1] * k[j][2 * h + 1];
        w[j] = std::exp(s / std::sqrt(2.0));
        total += w[j];
      }
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 2 * h; c < 2 * h + 2; ++c) ctx[i][c] += w[j] / total * v[j][c];
    }
  }
  const Mat hmid = norm(plus(X, plus_bias(mm(ctx, to_mat(p.attn.out_w)), p.attn.out_b)), p.norm1_gain, p.norm1_bias);
  Mat inner = plus_bias(mm(hmid, to_mat(p.ffn_in_w)), p.ffn_in_b);
  for (auto& row : inner)
    for (double& e : row) e = std::max(0.0, e);
  const Mat expect = norm(plus(hmid, plus_bias(mm(inner, to_mat(p.ffn_out_w)), p.ffn_out_b)), p.norm2_gain, p.norm2_bias);
  CHECK(max_diff(out, expect) < 1e-12);
}

TEST_CASE("identical branches give identical outputs") {
  std::mt19937_64 rng(9);
  for (auto mode : {EncoderMode::Siamese, EncoderMode::Crossed}) {
    const auto cfg = small_cfg(mode, 4, 2, 2);
    const auto layers = random_layers(cfg, 12);
    const Tensor x = random_tensor(rng, {5, 4}, -1, 1);
    const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
    Tape tape(false);
    const TokenStates b{tape.constant(x), mask};
    auto [oq, oa] = mode == EncoderMode::Siamese ? encode_siamese(b, b, cfg, layers) : encode_crossed(b, b, cfg, layers);
    const auto l = oq.states.value().data(), r = oa.states.value().data();
    CHECK(std::equal(l.begin(), l.end(), r.begin()));
  }
}

TEST_CASE("PAD rows never influence useful rows") {
  std::mt19937_64 rng(13);
  for (auto mode : {EncoderMode::Siamese, EncoderMode::Crossed}) {
    const auto cfg = small_cfg(mode, 4, 2);
    const auto layers = random_layers(cfg, 6);
    Tensor xq = random_tensor(rng, {5, 4}, -1, 1), xa = random_tensor(rng, {5, 4}, -1, 1);
    const std::vector<std::uint8_t> mq = {1, 1, 1, 0, 0}, ma = {1, 1, 0, 0, 0};
    Tape tape(false);
    auto run = [&] {
      return encode_crossed({tape.constant(xq), mq}, {tape.constant(xa), ma}, cfg, layers);
    };
    auto before = mode == EncoderMode::Siamese
                      ? encode_siamese({tape.constant(xq), mq}, {tape.constant(xa), ma}, cfg, layers)
                      : run();
    for (std::size_t j = 0; j < 4; ++j) {
      xq.at(4, j) += 3.0;
      xa.at(2, j) -= 2.0;
    }
    auto after = mode == EncoderMode::Siamese
                     ? encode_siamese({tape.constant(xq), mq}, {tape.constant(xa), ma}, cfg, layers)
                     : run();
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (mq[i]) CHECK(before.first.states.value().at(i, j) == after.first.states.value().at(i, j));
        if (ma[i]) CHECK(before.second.states.value().at(i, j) == after.second.states.value().at(i, j));
      }
    }
  }
}

TEST_CASE("crossed question states depend on the answer, siamese ones do not") {
  std::mt19937_64 rng(14);
  const Tensor xq = random_tensor(rng, {3, 4}, -1, 1);
  Tensor xa = random_tensor(rng, {3, 4}, -1, 1);
  const std::vector<std::uint8_t> m = {1, 1, 1};
  for (auto mode : {EncoderMode::Siamese, EncoderMode::Crossed}) {
    const auto cfg = small_cfg(mode);
    const auto layers = random_layers(cfg, 1);
    Tape tape(false);
    auto go = [&](const Tensor& a) {
      const TokenStates q{tape.constant(xq), m}, an{tape.constant(a), m};
      return (mode == EncoderMode::Siamese ? encode_siamese(q, an, cfg, layers) : encode_crossed(q, an, cfg, layers))
          .first.states.value()
          .at(0, 0);
    };
    Tensor other = xa;
    other.at(1, 2) += 0.5;
    if (mode == EncoderMode::Siamese)
      CHECK(go(xa) == go(other));
    else
      CHECK(go(xa) != go(other));
  }
}

TEST_CASE("pooling") {
  Tape tape(false);
  const Tensor h = Tensor::matrix(3, 2, {1, 2, 3, 4, 100, 100});
  const TokenStates t{tape.constant(h), {1, 1, 0}};
  auto values = [](Var v) { return std::vector<double>(v.value().data().begin(), v.value().data().end()); };
  CHECK(values(pool(t, Pooling::FirstToken)) == std::vector<double>{1, 2});
  CHECK(values(pool(t, Pooling::MeanUsefulToken)) == std::vector<double>{2, 3});
  const auto mean = values(pool(t, Pooling::MeanToken));
  CHECK(mean[0] == doctest::Approx(104.0 / 3));
  CHECK(mean[1] == doctest::Approx(106.0 / 3));

  const TokenStates full{tape.constant(h), {1, 1, 1}};
  CHECK(values(pool(full, Pooling::MeanUsefulToken)) == values(pool(full, Pooling::MeanToken)));
  CHECK_THROWS_AS(pool(TokenStates{tape.constant(h), {0, 0, 0}}, Pooling::MeanUsefulToken), ContractError);
}

TEST_CASE("CNN head") {
  SUBCASE("all-ones filter over [1,2,3] with k=2 gives 5") {
    Tape tape(false);
    CnnHeadConfig cfg{{2}, 1};
    CnnHeadParams p{{Tensor::matrix(2, 1, {1, 1})}, {Tensor({1})}};
    Var out = cnn_head({tape.constant(Tensor::matrix(3, 1, {1, 2, 3})), {1, 1, 1}}, cfg, p);
    CHECK(out.shape() == Shape{1});
    CHECK(out.value()[0] == 5.0);
  }

  SUBCASE("output size is kernels times feature maps") {
    Rng rng = make_rng(1, {});
    const CnnHeadConfig cfg{{2, 3}, 500};
    const auto p = CnnHeadParams::init(cfg, 4, rng);
    Tape tape(false);
    std::mt19937_64 g(1);
    Var out = cnn_head({tape.constant(random_tensor(g, {6, 4}, -1, 1)), {1, 1, 1, 1, 0, 0}}, cfg, p);
    CHECK(out.shape() == Shape{1000});
  }

  SUBCASE("kernel longer than the sequence is rejected") {
    const CnnHeadConfig cfg{{2, 9}, 3};
    CHECK_THROWS_AS(cfg.validate(8), ConfigError);
    CHECK_NOTHROW(cfg.validate(9));
  }

  SUBCASE("matches brute-force window enumeration with zeroed PAD rows") {
    std::mt19937_64 g(31);
    const std::size_t len = 6, d = 3;
    const CnnHeadConfig cfg{{1, 2, 3}, 4};
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng = make_rng(100 + trial, {});
      auto p = CnnHeadParams::init(cfg, d, rng);
      for (auto& b : p.bias) fill_uniform(b, rng, 0.2);
      const Tensor x = random_tensor(g, {len, d}, -1, 1);
      std::vector<std::uint8_t> mask(len, 1);
      for (std::size_t i = 2 + trial % 4; i < len; ++i) mask[i] = 0;
      Tape tape(false);
      const Tensor out = cnn_head({tape.constant(x), mask}, cfg, p).value();

      for (std::size_t s = 0; s < cfg.kernel_sizes.size(); ++s) {
        const std::size_t k = cfg.kernel_sizes[s];
        for (std::size_t f = 0; f < cfg.feature_maps; ++f) {
          double best = -1;
          for (std::size_t start = 0; start + k <= len; ++start) {
            double r = p.bias[s][f];
            for (std::size_t o = 0; o < k; ++o)
              for (std::size_t c = 0; c < d; ++c)
                r += (mask[start + o] ? x.at(start + o, c) : 0.0) * p.weight[s].at(o * d + c, f);
            best = std::max(best, std::max(0.0, r));
          }
          CHECK(out[s * cfg.feature_maps + f] == doctest::Approx(best).epsilon(1e-13));
        }
      }
    }
  }
}

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Straight-line scalar GRU over rows in the given order.
Mat ref_gru(const Mat& x, const GruCellParams& c, bool reverse) {
  const std::size_t hd = c.reset_b.size(), len = x.size(), d = x[0].size();
  std::vector<double> h(hd, 0.0);
  Mat out(len);
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reverse ? len - 1 - step : step;
    std::vector<double> hx(h);
    hx.insert(hx.end(), x[t].begin(), x[t].end());
    std::vector<double> r(hd), z(hd), rhx(hd + d), next(hd);
    for (std::size_t j = 0; j < hd; ++j) {
      double sr = c.reset_b[j], sz = c.update_b[j];
      for (std::size_t i = 0; i < hd + d; ++i) {
        sr += hx[i] * c.reset_w.at(i, j);
        sz += hx[i] * c.update_w.at(i, j);
      }
      r[j] = sig(sr);
      z[j] = sig(sz);
    }
    for (std::size_t i = 0; i < hd; ++i) rhx[i] = r[i] * h[i];
    for (std::size_t i = 0; i < d; ++i) rhx[hd + i] = x[t][i];
    for (std::size_t j = 0; j < hd; ++j) {
      double sc = c.cand_b[j];
      for (std::size_t i = 0; i < hd + d; ++i) sc += rhx[i] * c.cand_w.at(i, j);
      next[j] = (1 - z[j]) * h[j] + z[j] * std::tanh(sc);
    }
    h = next;
    out[t] = h;
  }
  return out;
}

}  // namespace

TEST_CASE("GRU") {
  std::mt19937_64 g(41);

  SUBCASE("three-step recurrence matches a scalar evaluation") {
    Rng rng = make_rng(7, {});
    auto cell = GruCellParams::init(2, 3, rng);
    for (Tensor* b : {&cell.reset_b, &cell.update_b, &cell.cand_b}) fill_uniform(*b, rng, 0.5);
    const Tensor x = random_tensor(g, {3, 3}, -1, 1);
    Tape tape(false);
    for (bool reverse : {false, true}) {
      const Tensor out = gru_scan(tape.constant(x), cell, reverse).value();
      CHECK(max_diff(out, ref_gru(to_mat(x), cell, reverse)) < 1e-12);
    }
  }

  SUBCASE("all-zero weights and biases keep the state at zero") {
    GruCellParams zero{Tensor({5, 2}), Tensor({2}), Tensor({5, 2}), Tensor({2}), Tensor({5, 2}), Tensor({2})};
    GruHeadParams p{zero, zero};
    Tape tape(false);
    Var out = bigru_head({tape.constant(random_tensor(g, {4, 3}, -1, 1)), {1, 1, 1, 0}}, GruHeadConfig{2}, p);
    CHECK(out.shape() == Shape{4});
    for (double v : out.value().data()) CHECK(v == 0.0);
  }

  SUBCASE("a saturated-closed update gate freezes the state") {
    // Input column 0 drives the update gate: +1 opens it fully, -1 shuts it.
    Rng rng = make_rng(8, {});
    auto cell = GruCellParams::init(2, 2, rng);
    for (std::size_t j = 0; j < 2; ++j) {
      cell.update_w.at(0, j) = 0;
      cell.update_w.at(1, j) = 0;
      cell.update_w.at(2, j) = 60;
      cell.update_w.at(3, j) = 0;
    }
    Tensor x = random_tensor(g, {5, 2}, -1, 1);
    x.at(0, 0) = 1;
    for (std::size_t t = 1; t < 5; ++t) x.at(t, 0) = -1;
    Tape tape(false);
    const Tensor out = gru_scan(tape.constant(x), cell, false).value();
    CHECK(std::abs(out.at(0, 0)) > 1e-3);
    for (std::size_t t = 1; t < 5; ++t)
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(out.at(t, j) - out.at(0, j)) < 1e-20);
  }

  SUBCASE("BiGRU averages both directions over useful rows") {
    Rng rng = make_rng(9, {});
    const GruHeadConfig cfg{3};
    const auto p = GruHeadParams::init(cfg, 2, rng);
    Tensor x = random_tensor(g, {5, 2}, -1, 1);
    const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
    Tape tape(false);
    const Tensor out = bigru_head({tape.constant(x), mask}, cfg, p).value();
    REQUIRE(out.shape() == Shape{6});

    Mat xm = to_mat(x);
    for (std::size_t t = 3; t < 5; ++t) xm[t] = {0, 0};
    const Mat f = ref_gru(xm, p.forward, false), b = ref_gru(xm, p.backward, true);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out[j] == doctest::Approx((f[0][j] + f[1][j] + f[2][j]) / 3).epsilon(1e-12));
      CHECK(out[3 + j] == doctest::Approx((b[0][j] + b[1][j] + b[2][j]) / 3).epsilon(1e-12));
    }
  }

  SUBCASE("mismatched cell shapes are dimension errors") {
    Rng rng = make_rng(10, {});
    const auto cell = GruCellParams::init(2, 3, rng);
    Tape tape(false);
    CHECK_THROWS_AS(gru_scan(tape.constant(Tensor({4, 5})), cell, false), DimensionError);
  }
}

TEST_CASE("encoder config validation") {
  auto cfg = small_cfg(EncoderMode::Siamese, 6, 1, 4);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.heads = 3;
  CHECK_NOTHROW(cfg.validate());
  cfg.layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
