#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include "deputy/data.hpp"
#include "deputy/encoder.hpp"
#include "deputy/errors.hpp"
#include "deputy/losses.hpp"
#include "oracles.hpp"

using namespace deputy;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIoError;
}

// Straight-line re-evaluation, one row and one unit at a time.
Matrix reference_forward(const EncoderParams& p, const Matrix& x) {
  Matrix out(x.rows(), p.output_dim());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> h(x.row(r).data(), x.row(r).data() + x.cols());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const Layer& layer = p.layers[l];
      std::vector<double> z(static_cast<std::size_t>(layer.weight.rows()));
      for (Eigen::Index o = 0; o < layer.weight.rows(); ++o) {
        double acc = layer.bias[o];
        for (Eigen::Index i = 0; i < layer.weight.cols(); ++i) acc += layer.weight(o, i) * h[i];
        const bool last = l + 1 == p.layers.size();
        z[o] = (!last && p.activation == Activation::kTanh) ? std::tanh(acc) : acc;
      }
      h = std::move(z);
    }
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = h[c];
  }
  return out;
}

// Visits every scalar parameter as a mutable reference.
template <class F>
void for_each_param(EncoderParams& p, F&& f) {
  for (Layer& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) f(layer.weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) f(layer.bias.data()[i]);
  }
}

std::vector<double> flatten(EncoderParams p) {
  std::vector<double> out;
  for_each_param(p, [&](double& x) { out.push_back(x); });
  return out;
}

std::vector<double> numeric_param_gradient(EncoderParams p,
                                           const std::function<double(const EncoderParams&)>& f) {
  std::vector<double> g;
  const double h = 1e-5;
  for_each_param(p, [&](double& x) {
    const double keep = x;
    x = keep + h;
    const double up = f(p);
    x = keep - h;
    const double down = f(p);
    x = keep;
    g.push_back((up - down) / (2 * h));
  });
  return g;
}

double vec_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  Vector va = Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
  Vector vb = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  return oracle::relative_error(va, vb);
}

// Directional triplet loss over a two-view batch and its gradient with respect
// to the stacked embeddings [emb_a; emb_b].
double two_view_loss(const Matrix& emb, const LossConfig& cfg, Matrix* grad) {
  const Eigen::Index b = emb.rows() / 2;
  const Matrix ea = emb.topRows(b);
  const Matrix eb = emb.bottomRows(b);
  std::vector<ContrastiveView> views;
  for (Eigen::Index i = 0; i < b; ++i)
    views.push_back({ea.row(i).transpose(), eb.row(i).transpose(),
                     gather_negatives(ea, eb, static_cast<std::size_t>(i))});
  const BatchLossResult r = batch_loss(views, cfg);
  if (grad) {
    *grad = Matrix::Zero(emb.rows(), emb.cols());
    for (Eigen::Index i = 0; i < b; ++i) {
      grad->row(i) += r.per_view[i].grad_anchor.transpose();
      grad->row(b + i) += r.per_view[i].grad_positive.transpose();
      Eigen::Index slot = 0;
      for (Eigen::Index j = 0; j < b; ++j) {
        if (j == i) continue;
        grad->row(j) += r.per_view[i].grad_negatives.row(slot++);
        grad->row(b + j) += r.per_view[i].grad_negatives.row(slot++);
      }
    }
  }
  return r.value;
}

}  // namespace

TEST_CASE("forward examples") {
  std::mt19937_64 rng(41);
  EncoderParams zero = zeros_like(init_encoder(4, {5}, 3, Activation::kTanh, 1));
  CHECK(embed(zero, oracle::random_matrix(rng, 6, 4)).isZero(0));

  EncoderParams id;
  id.activation = Activation::kTanh;
  id.layers.push_back({Matrix::Identity(3, 3), Vector::Zero(3)});
  const Matrix x = oracle::random_matrix(rng, 5, 3);
  CHECK(embed(id, x) == x);

  for (int t = 0; t < 20; ++t) {
    const EncoderParams p =
        init_encoder(4, {7}, 3, t % 2 ? Activation::kTanh : Activation::kIdentity, 100 + t);
    const Matrix in = oracle::random_matrix(rng, 5, 4);
    CHECK((embed(p, in) - reference_forward(p, in)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK(code_of([&] { forward(id, oracle::random_matrix(rng, 2, 4)); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("init_encoder is seeded and chains") {
  const EncoderParams a = init_encoder(32, {64, 64}, 16, Activation::kTanh, 9);
  const EncoderParams b = init_encoder(32, {64, 64}, 16, Activation::kTanh, 9);
  const EncoderParams c = init_encoder(32, {64, 64}, 16, Activation::kTanh, 10);
  a.validate();
  CHECK(a.layers.size() == 3);
  CHECK(a.input_dim() == 32);
  CHECK(a.output_dim() == 16);
  CHECK(flatten(a) == flatten(b));
  CHECK(flatten(a) != flatten(c));
  CHECK(a.layers[0].bias.isZero(0));
}

TEST_CASE("backward examples") {
  std::mt19937_64 rng(42);
  const EncoderParams p = init_encoder(4, {6}, 3, Activation::kTanh, 3);
  const ForwardResult fr = forward(p, oracle::random_matrix(rng, 5, 4));
  const EncoderParams g0 = backward(p, fr.cache, Matrix::Zero(5, 3));
  for (double x : flatten(g0)) CHECK(x == 0.0);

  // L = 0.5 |X W^T + b|^2 has dL/dW = E^T X and dL/db = column sums of E.
  EncoderParams lin;
  lin.activation = Activation::kIdentity;
  lin.layers.push_back({oracle::random_matrix(rng, 3, 4), oracle::random_vector(rng, 3)});
  const Matrix x = oracle::random_matrix(rng, 6, 4);
  const ForwardResult lf = forward(lin, x);
  const EncoderParams lg = backward(lin, lf.cache, lf.embeddings);
  CHECK(lg.layers[0].weight.isApprox(lf.embeddings.transpose() * x, 1e-13));
  CHECK(lg.layers[0].bias.isApprox(lf.embeddings.colwise().sum().transpose(), 1e-13));
}

TEST_CASE("backward rejects a cache from a different forward") {
  std::mt19937_64 rng(43);
  const EncoderParams p = init_encoder(4, {6}, 3, Activation::kTanh, 3);
  const EncoderParams q = init_encoder(4, {5}, 3, Activation::kTanh, 3);
  const ForwardResult fr = forward(q, oracle::random_matrix(rng, 5, 4));
  CHECK(code_of([&] { backward(p, fr.cache, Matrix::Zero(5, 3)); }) == ErrorCode::kStaleCache);
  const ForwardResult fp = forward(p, oracle::random_matrix(rng, 5, 4));
  CHECK(code_of([&] { backward(p, fp.cache, Matrix::Zero(4, 3)); }) == ErrorCode::kStaleCache);
  CHECK(code_of([&] { backward(p, ActivationCache{}, Matrix::Zero(5, 3)); }) ==
        ErrorCode::kStaleCache);
}

TEST_CASE("backward matches central differences of a linear probe loss") {
  std::mt19937_64 rng(44);
  for (int t = 0; t < 100; ++t) {
    const EncoderParams p = init_encoder(3, {4, 3}, 2,
                                         t % 3 ? Activation::kTanh : Activation::kIdentity, 500 + t);
    const Matrix x = oracle::random_matrix(rng, 3, 3);
    const Matrix g = oracle::random_matrix(rng, 3, 2);
    const auto f = [&](const EncoderParams& q) { return (embed(q, x).array() * g.array()).sum(); };
    const ForwardResult fr = forward(p, x);
    const auto analytic = flatten(backward(p, fr.cache, g));
    CHECK(vec_rel_error(analytic, numeric_param_gradient(p, f)) <= 1e-4);
  }
}

TEST_CASE("backward matches central differences through the truncated triplet loss") {
  std::mt19937_64 rng(45);
  LossConfig cfg;
  cfg.variant = LossVariant::kRankK;
  cfg.k = 3;
  int checked = 0;
  for (int t = 0; t < 30; ++t) {
    const EncoderParams p = init_encoder(4, {5}, 3, Activation::kTanh, 900 + t);
    const Matrix x = oracle::random_matrix(rng, 8, 4);
    const ForwardResult fr = forward(p, x);
    // Skip instances whose deputy ranks sit near a tie.
    bool near_tie = false;
    for (int i = 0; i < 4 && !near_tie; ++i) {
      const Matrix ea = fr.embeddings.topRows(4), eb = fr.embeddings.bottomRows(4);
      ContrastiveView v{ea.row(i).transpose(), eb.row(i).transpose(), gather_negatives(ea, eb, i)};
      near_tie = oracle::min_rank_gap(v) < 1e-4;
    }
    if (near_tie) continue;
    Matrix grad;
    two_view_loss(fr.embeddings, cfg, &grad);
    const auto f = [&](const EncoderParams& q) { return two_view_loss(embed(q, x), cfg, nullptr); };
    CHECK(vec_rel_error(flatten(backward(p, fr.cache, grad)), numeric_param_gradient(p, f)) <= 1e-4);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("forward and backward are bit-identical across calls") {
  std::mt19937_64 rng(46);
  const EncoderParams p = init_encoder(8, {16, 16}, 4, Activation::kTanh, 77);
  const Matrix x = oracle::random_matrix(rng, 10, 8);
  const Matrix g = oracle::random_matrix(rng, 10, 4);
  const ForwardResult a = forward(p, x);
  const ForwardResult b = forward(p, x);
  CHECK(a.embeddings == b.embeddings);
  CHECK(flatten(backward(p, a.cache, g)) == flatten(backward(p, b.cache, g)));
}

TEST_CASE("ema_update examples") {
  const EncoderParams online = init_encoder(3, {4}, 2, Activation::kTanh, 1);
  const EncoderParams other = init_encoder(3, {4}, 2, Activation::kTanh, 2);
  CHECK(flatten(ema_update({other, 1.0}, online).params) == flatten(other));
  CHECK(flatten(ema_update({other, 0.0}, online).params) == flatten(online));
  CHECK(flatten(ema_update({online, 0.37}, online).params) == flatten(online));

  EncoderParams t = zeros_like(online);
  EncoderParams o = zeros_like(online);
  o.layers[0].weight(1, 2) = 2.0;
  CHECK(ema_update({t, 0.5}, o).params.layers[0].weight(1, 2) == 1.0);

  const EncoderParams wrong = init_encoder(3, {5}, 2, Activation::kTanh, 1);
  CHECK(code_of([&] { ema_update({wrong, 0.5}, online); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("cosine_lr examples") {
  CHECK(cosine_lr(0, 100, 0.3) == 0.3);
  CHECK(cosine_lr(100, 100, 0.3) == 0.0);
  CHECK(cosine_lr(50, 100, 0.3) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(cosine_lr(25, 100, 1.0) == doctest::Approx(0.5 * (1 + std::sqrt(0.5))));
  CHECK(code_of([] { cosine_lr(101, 100, 0.3); }) == ErrorCode::kOutOfRange);
  CHECK(code_of([] { cosine_lr(-1, 100, 0.3); }) == ErrorCode::kOutOfRange);
  CHECK(code_of([] { cosine_lr(0, 0, 0.3); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("sgd_momentum_step examples") {
  const EncoderParams start = init_encoder(3, {4}, 2, Activation::kTanh, 5);
  const EncoderParams grads = init_encoder(3, {4}, 2, Activation::kTanh, 6);

  EncoderParams p = start;
  OptimizerState frozen = make_optimizer(p, 0.0, 0.9, 0.1, 10);
  sgd_momentum_step(p, grads, frozen);
  CHECK(flatten(p) == flatten(start));
  CHECK(frozen.step == 1);

  p = start;
  OptimizerState plain = make_optimizer(p, 0.1, 0.0, 0.0, 10);
  sgd_momentum_step(p, grads, plain);
  const auto s = flatten(start), g = flatten(grads), after = flatten(p);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(after[i] == doctest::Approx(s[i] - 0.1 * g[i]));

  // f(x) = x^2 / 2 from x = 1, lr schedule over 4 steps, mu = 0.5, wd = 0.1:
  // step 0: lr 0.1, v = 1 + 0.1 = 1.1, x = 1 - 0.11 = 0.89
  // step 1: lr 0.05(1 + cos(pi/4)), v = 0.55 + 0.89 + 0.089 = 1.529
  EncoderParams q;
  q.activation = Activation::kIdentity;
  q.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1)});
  OptimizerState st = make_optimizer(q, 0.1, 0.5, 0.1, 4);
  for (int i = 0; i < 2; ++i) {
    EncoderParams gq = zeros_like(q);
    gq.layers[0].weight(0, 0) = q.layers[0].weight(0, 0);
    sgd_momentum_step(q, gq, st);
  }
  const double lr1 = 0.05 * (1 + std::cos(M_PI / 4));
  CHECK(q.layers[0].weight(0, 0) == doctest::Approx(0.89 - lr1 * 1.529).epsilon(1e-14));
  CHECK(st.velocity.layers[0].weight(0, 0) == doctest::Approx(1.529).epsilon(1e-14));

  const EncoderParams wrong = init_encoder(3, {5}, 2, Activation::kTanh, 6);
  CHECK(code_of([&] { sgd_momentum_step(p, wrong, plain); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("truncated triplet training decreases the loss on separated blobs") {
  LossConfig cfg;
  cfg.variant = LossVariant::kRankK;
  cfg.k = 3;  // m = 6 with b = 4
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    // Two blobs at (+3, 0) and (-3, 0); two items each, two noisy views per item.
    Matrix x(8, 2);
    for (int i = 0; i < 4; ++i) {
      const double cx = i < 2 ? 3.0 : -3.0;
      const double base_y = noise(rng) * 5;
      x.row(i) << cx + noise(rng), base_y + noise(rng);
      x.row(4 + i) << cx + noise(rng), base_y + noise(rng);
    }
    EncoderParams p;
    p.activation = Activation::kIdentity;
    p.layers.push_back({oracle::random_matrix(rng, 2, 2), Vector::Zero(2)});
    OptimizerState st = make_optimizer(p, 0.01, 0.0, 0.0, 1000);
    double prev = two_view_loss(embed(p, x), cfg, nullptr);
    for (int step = 0; step < 10; ++step) {
      const ForwardResult fr = forward(p, x);
      Matrix grad;
      two_view_loss(fr.embeddings, cfg, &grad);
      sgd_momentum_step(p, backward(p, fr.cache, grad), st);
      const double cur = two_view_loss(embed(p, x), cfg, nullptr);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  for (auto act : {Activation::kTanh, Activation::kIdentity}) {
    EncoderParams p = init_encoder(5, {7, 3}, 4, act, 12);
    p.layers[1].bias[2] = -0.0;
    p.layers[2].weight(0, 0) = std::numeric_limits<double>::denorm_min();
    const std::string bytes = serialize_checkpoint(p);
    CHECK(bytes.size() == 8 + 4 * 3 + 4 * 4 + 8 * (7 * 5 + 7 + 3 * 7 + 3 + 4 * 3 + 4));
    CHECK(bytes.substr(0, 8) == "DPTYCKPT");
    const EncoderParams q = deserialize_checkpoint(bytes);
    CHECK(q.activation == act);
    REQUIRE(q.same_shape(p));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      CHECK(std::memcmp(p.layers[l].weight.data(), q.layers[l].weight.data(),
                        sizeof(double) * p.layers[l].weight.size()) == 0);
      CHECK(std::memcmp(p.layers[l].bias.data(), q.layers[l].bias.data(),
                        sizeof(double) * p.layers[l].bias.size()) == 0);
    }
    CHECK(serialize_checkpoint(q) == bytes);
  }
}

TEST_CASE("checkpoint parsing errors") {
  const std::string good = serialize_checkpoint(init_encoder(3, {4}, 2, Activation::kTanh, 1));
  std::string bad = good;
  bad[0] = 'X';
  CHECK(code_of([&] { deserialize_checkpoint(bad); }) == ErrorCode::kParseError);
  CHECK(code_of([&] { deserialize_checkpoint(good.substr(0, good.size() - 3)); }) ==
        ErrorCode::kParseError);
  CHECK(code_of([&] { deserialize_checkpoint(good + "x"); }) == ErrorCode::kParseError);
  bad = good;
  bad[8] = 9;  // version
  CHECK(code_of([&] { deserialize_checkpoint(bad); }) == ErrorCode::kParseError);
  CHECK(code_of([] { load_checkpoint("/nonexistent/dir/ckpt.bin"); }) == ErrorCode::kIoError);
}

TEST_CASE("checkpoint files round trip") {
  const auto path = std::filesystem::temp_directory_path() / "deputy_test_ckpt.bin";
  const EncoderParams p = init_encoder(6, {8}, 3, Activation::kTanh, 4);
  save_checkpoint(path.string(), p);
  CHECK(flatten(load_checkpoint(path.string())) == flatten(p));
  std::filesystem::remove(path);
}
