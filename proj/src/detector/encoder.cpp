// SPDX-License-Identifier: Apache-2.0
#include "chatqe/detector/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "chatqe/error.hpp"
#include "chatqe/jsonl.hpp"

namespace chatqe::detector {

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kInitStd = 0.02;
constexpr int kPerLayer = 16;
constexpr int kEmbeddingParams = 5;

// Parameter slots.
enum Slot : int { kTok, kPos, kSeg, kEmbGamma, kEmbBeta };
enum LayerSlot : int {
  kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kLn1Gamma, kLn1Beta, kW1, kB1, kW2, kB2, kLn2Gamma, kLn2Beta
};
enum HeadSlot : int { kPoolW, kPoolB, kClsW, kClsB };

using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormCache& cache) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  cache.xhat.resize(rows, cols);
  cache.inv_std.resize(rows);
  Matrix y(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std(i) = inv;
    cache.xhat.row(i) = (x.row(i).array() - mu) * inv;
    y.row(i) = cache.xhat.row(i).array() * gamma.row(0).array() + beta.row(0).array();
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gamma, Matrix& dgamma,
                           Matrix& dbeta) {
  const double n = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    dgamma.row(0).array() += dy.row(i).array() * cache.xhat.row(i).array();
    dbeta.row(0) += dy.row(i);
    const RowVector dxhat = (dy.row(i).array() * gamma.row(0).array()).matrix();
    const double sum = dxhat.sum();
    const double dot = dxhat.dot(cache.xhat.row(i));
    dx.row(i) = (cache.inv_std(i) / n) * (n * dxhat.array() - sum - cache.xhat.row(i).array() * dot);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
double gelu_grad(double x) {
  static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

std::array<double, 2> softmax2(const std::array<double, 2>& z) {
  const double m = std::max(z[0], z[1]);
  const double a = std::exp(z[0] - m);
  const double b = std::exp(z[1] - m);
  return {a / (a + b), b / (a + b)};
}

struct Network::Forward {
  struct Layer {
    Matrix input, q, k, v, context, h1, u, f, out;
    std::vector<Matrix> probs;
    LayerNormCache ln1, ln2;
  };
  LayerNormCache ln0;
  std::vector<Layer> layers;
  RowVector pool_in, pooled;
  std::array<double, 2> logits{};
};

Network::Network(EncoderShape shape, std::uint64_t seed) : shape_(shape) {
  if (shape_.vocab_size < 4 || shape_.hidden <= 0 || shape_.layers < 0 || shape_.heads <= 0 || shape_.ffn <= 0 ||
      shape_.max_positions <= 0 || shape_.segments <= 0 || shape_.hidden % shape_.heads != 0)
    throw ModelError("invalid encoder shape");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  auto add = [&](std::string name, int rows, int cols, bool random, double fill, bool decay, bool encoder) {
    Parameter p;
    p.name = std::move(name);
    p.value.resize(rows, cols);
    if (random) {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = normal(rng);
    } else {
      p.value.setConstant(fill);
    }
    p.grad = Matrix::Zero(rows, cols);
    p.decay = decay;
    p.encoder = encoder;
    params_.push_back(std::move(p));
  };
  const int d = shape_.hidden;
  add("embeddings.token", shape_.vocab_size, d, true, 0, true, true);
  add("embeddings.position", shape_.max_positions, d, true, 0, true, true);
  add("embeddings.segment", shape_.segments, d, true, 0, true, true);
  add("embeddings.norm.gamma", 1, d, false, 1.0, false, true);
  add("embeddings.norm.beta", 1, d, false, 0.0, false, true);
  for (int l = 0; l < shape_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* proj : {"query", "key", "value", "output"}) {
      add(p + "attention." + proj + ".weight", d, d, true, 0, true, true);
      add(p + "attention." + proj + ".bias", 1, d, false, 0.0, false, true);
    }
    add(p + "attention.norm.gamma", 1, d, false, 1.0, false, true);
    add(p + "attention.norm.beta", 1, d, false, 0.0, false, true);
    add(p + "ffn.in.weight", d, shape_.ffn, true, 0, true, true);
    add(p + "ffn.in.bias", 1, shape_.ffn, false, 0.0, false, true);
    add(p + "ffn.out.weight", shape_.ffn, d, true, 0, true, true);
    add(p + "ffn.out.bias", 1, d, false, 0.0, false, true);
    add(p + "ffn.norm.gamma", 1, d, false, 1.0, false, true);
    add(p + "ffn.norm.beta", 1, d, false, 0.0, false, true);
  }
  add("pooler.weight", d, d, true, 0, true, false);
  add("pooler.bias", 1, d, false, 0.0, false, false);
  add("classifier.weight", d, 2, true, 0, true, false);
  add("classifier.bias", 1, 2, false, 0.0, false, false);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void Network::zero_gradients() {
  for (auto& p : params_) p.grad.setZero();
}

void Network::check_sequence(std::span<const int> tokens, std::span<const int> segments) const {
  if (tokens.empty() || tokens.size() != segments.size())
    throw ModelError("token and segment sequences must be non-empty and of equal length");
  if (static_cast<int>(tokens.size()) > shape_.max_positions)
    throw ModelError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds the model's " +
                     std::to_string(shape_.max_positions) + " positions");
  for (int t : tokens)
    if (t < 0 || t >= shape_.vocab_size)
      throw ModelError("token id " + std::to_string(t) + " outside the model vocabulary of " +
                       std::to_string(shape_.vocab_size));
  for (int s : segments)
    if (s < 0 || s >= shape_.segments) throw ModelError("segment id " + std::to_string(s) + " out of range");
}

void Network::run_forward(std::span<const int> tokens, std::span<const int> segments, Forward& f) const {
  const int T = static_cast<int>(tokens.size());
  const int d = shape_.hidden;
  const int dh = d / shape_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(T, d);
  for (int t = 0; t < T; ++t)
    x.row(t) = params_[kTok].value.row(tokens[t]) + params_[kPos].value.row(t) + params_[kSeg].value.row(segments[t]);
  Matrix h = layer_norm(x, params_[kEmbGamma].value, params_[kEmbBeta].value, f.ln0);

  f.layers.resize(shape_.layers);
  for (int l = 0; l < shape_.layers; ++l) {
    const Parameter* P = &params_[kEmbeddingParams + l * kPerLayer];
    auto& L = f.layers[l];
    L.input = std::move(h);
    L.q = (L.input * P[kWq].value).rowwise() + P[kBq].value.row(0);
    L.k = (L.input * P[kWk].value).rowwise() + P[kBk].value.row(0);
    L.v = (L.input * P[kWv].value).rowwise() + P[kBv].value.row(0);
    L.context.resize(T, d);
    L.probs.resize(shape_.heads);
    for (int hd = 0; hd < shape_.heads; ++hd) {
      Matrix s = L.q.middleCols(hd * dh, dh) * L.k.middleCols(hd * dh, dh).transpose() * scale;
      softmax_rows(s);
      L.context.middleCols(hd * dh, dh) = s * L.v.middleCols(hd * dh, dh);
      L.probs[hd] = std::move(s);
    }
    Matrix r1 = L.input + ((L.context * P[kWo].value).rowwise() + P[kBo].value.row(0));
    L.h1 = layer_norm(r1, P[kLn1Gamma].value, P[kLn1Beta].value, L.ln1);
    L.u = (L.h1 * P[kW1].value).rowwise() + P[kB1].value.row(0);
    L.f = L.u.unaryExpr([](double v) { return gelu(v); });
    Matrix r2 = L.h1 + ((L.f * P[kW2].value).rowwise() + P[kB2].value.row(0));
    L.out = layer_norm(r2, P[kLn2Gamma].value, P[kLn2Beta].value, L.ln2);
    h = L.out;
  }

  const Parameter* H = &params_[kEmbeddingParams + shape_.layers * kPerLayer];
  f.pool_in = h.row(0);
  f.pooled = ((f.pool_in * H[kPoolW].value) + H[kPoolB].value).array().tanh().matrix();
  const RowVector z = f.pooled * H[kClsW].value + H[kClsB].value;
  f.logits = {z(0), z(1)};
}

std::array<double, 2> Network::logits(std::span<const int> tokens, std::span<const int> segments) const {
  check_sequence(tokens, segments);
  Forward f;
  run_forward(tokens, segments, f);
  return f.logits;
}

double Network::accumulate_gradients(std::span<const int> tokens, std::span<const int> segments, int label,
                                     double scale) {
  check_sequence(tokens, segments);
  if (label != 0 && label != 1) throw ModelError("label must be 0 or 1");
  Forward f;
  run_forward(tokens, segments, f);

  const int T = static_cast<int>(tokens.size());
  const int d = shape_.hidden;
  const int dh = d / shape_.heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const auto probs = softmax2(f.logits);
  const double loss = -std::log(std::max(probs[label], 1e-300));
  RowVector dz(2);
  dz << probs[0] - (label == 0 ? 1.0 : 0.0), probs[1] - (label == 1 ? 1.0 : 0.0);
  dz *= scale;

  Parameter* H = &params_[kEmbeddingParams + shape_.layers * kPerLayer];
  H[kClsW].grad += f.pooled.transpose() * dz;
  H[kClsB].grad += dz;
  const RowVector dpooled = dz * H[kClsW].value.transpose();
  const RowVector dpre = (dpooled.array() * (1.0 - f.pooled.array().square())).matrix();
  H[kPoolW].grad += f.pool_in.transpose() * dpre;
  H[kPoolB].grad += dpre;

  Matrix dh_out = Matrix::Zero(T, d);
  dh_out.row(0) = dpre * H[kPoolW].value.transpose();

  for (int l = shape_.layers - 1; l >= 0; --l) {
    Parameter* P = &params_[kEmbeddingParams + l * kPerLayer];
    const auto& L = f.layers[l];

    const Matrix dr2 = layer_norm_backward(dh_out, L.ln2, P[kLn2Gamma].value, P[kLn2Gamma].grad, P[kLn2Beta].grad);
    P[kW2].grad += L.f.transpose() * dr2;
    P[kB2].grad += dr2.colwise().sum();
    const Matrix df = dr2 * P[kW2].value.transpose();
    const Matrix du = df.array() * L.u.unaryExpr([](double v) { return gelu_grad(v); }).array();
    P[kW1].grad += L.h1.transpose() * du;
    P[kB1].grad += du.colwise().sum();
    const Matrix dh1 = dr2 + du * P[kW1].value.transpose();

    const Matrix dr1 = layer_norm_backward(dh1, L.ln1, P[kLn1Gamma].value, P[kLn1Gamma].grad, P[kLn1Beta].grad);
    P[kWo].grad += L.context.transpose() * dr1;
    P[kBo].grad += dr1.colwise().sum();
    const Matrix dcontext = dr1 * P[kWo].value.transpose();

    Matrix dq(T, d), dk(T, d), dv(T, d);
    for (int hd = 0; hd < shape_.heads; ++hd) {
      const auto& a = L.probs[hd];
      const Matrix dc = dcontext.middleCols(hd * dh, dh);
      const Matrix da = dc * L.v.middleCols(hd * dh, dh).transpose();
      dv.middleCols(hd * dh, dh) = a.transpose() * dc;
      const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
      const Matrix ds = (a.array() * (da.colwise() - row_dot).array()) * attn_scale;
      dq.middleCols(hd * dh, dh) = ds * L.k.middleCols(hd * dh, dh);
      dk.middleCols(hd * dh, dh) = ds.transpose() * L.q.middleCols(hd * dh, dh);
    }
    P[kWq].grad += L.input.transpose() * dq;
    P[kBq].grad += dq.colwise().sum();
    P[kWk].grad += L.input.transpose() * dk;
    P[kBk].grad += dk.colwise().sum();
    P[kWv].grad += L.input.transpose() * dv;
    P[kBv].grad += dv.colwise().sum();
    dh_out = dr1 + dq * P[kWq].value.transpose() + dk * P[kWk].value.transpose() + dv * P[kWv].value.transpose();
  }

  const Matrix dx = layer_norm_backward(dh_out, f.ln0, params_[kEmbGamma].value, params_[kEmbGamma].grad,
                                        params_[kEmbBeta].grad);
  for (int t = 0; t < T; ++t) {
    params_[kTok].grad.row(tokens[t]) += dx.row(t);
    params_[kPos].grad.row(t) += dx.row(t);
    params_[kSeg].grad.row(segments[t]) += dx.row(t);
  }
  return loss;
}

// Tensor file: "CQEW", u32 version, u32 count, then per tensor u32 name
// length, name bytes, u32 rows, u32 cols, rows*cols little-endian doubles.
namespace {
constexpr char kMagic[4] = {'C', 'Q', 'E', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

void Network::save(const std::filesystem::path& path, bool encoder_part) const {
  AtomicFileWriter w(path);
  auto& out = w.stream();
  std::uint32_t count = 0;
  for (const auto& p : params_) count += p.encoder == encoder_part;
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, count);
  for (const auto& p : params_) {
    if (p.encoder != encoder_part) continue;
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
  }
  w.commit();
}

void Network::load(const std::filesystem::path& path, bool encoder_part) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open weights " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ModelError(path.string() + " is not a weights file");
  if (get_u32(in) != kVersion) throw ModelError(path.string() + ": unsupported weights version");
  const std::uint32_t count = get_u32(in);
  std::uint32_t expected = 0;
  for (const auto& p : params_) expected += p.encoder == encoder_part;
  if (count != expected)
    throw ModelError(path.string() + " holds " + std::to_string(count) + " tensors, the model expects " +
                     std::to_string(expected));
  for (auto& p : params_) {
    if (p.encoder != encoder_part) continue;
    const std::uint32_t len = get_u32(in);
    if (!in || len > 4096) throw ModelError(path.string() + ": corrupt tensor header");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    if (!in || name != p.name || rows != p.value.rows() || cols != p.value.cols())
      throw ModelError(path.string() + ": tensor '" + name + "' " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not match '" + p.name + "' " + std::to_string(p.value.rows()) + "x" +
                       std::to_string(p.value.cols()));
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
    if (!in) throw ModelError(path.string() + ": truncated tensor '" + p.name + "'");
  }
}

}  // namespace chatqe::detector
