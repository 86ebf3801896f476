#include "proxrl/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "proxrl/errors.hpp"
#include "proxrl/rng.hpp"

namespace proxrl {

namespace {

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::Tanh) return z.array().tanh();
  return z.cwiseMax(0.0);
}

// Derivative of the activation expressed through the post-activation value.
inline Eigen::MatrixXd activate_deriv_from_post(const Eigen::MatrixXd& post, Activation act) {
  if (act == Activation::Tanh) return 1.0 - post.array().square();
  return (post.array() > 0.0).cast<double>();
}

}  // namespace

Eigen::Index MlpParams::param_count() const {
  Eigen::Index total = 0;
  for (size_t l = 0; l < weights.size(); ++l) total += weights[l].size() + biases[l].size();
  return total;
}

std::vector<int> MlpParams::layer_dims() const {
  std::vector<int> dims;
  if (weights.empty()) return dims;
  dims.push_back(static_cast<int>(weights.front().cols()));
  for (const auto& w : weights) dims.push_back(static_cast<int>(w.rows()));
  return dims;
}

void MlpParams::validate() const {
  if (weights.size() != biases.size()) throw DomainError("MlpParams: weight/bias count mismatch");
  for (size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != biases[l].size())
      throw DomainError("MlpParams: bias dimension mismatch");
    if (l > 0 && weights[l].cols() != weights[l - 1].rows())
      throw DomainError("MlpParams: consecutive layer dimensions do not compose");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw DomainError("MlpParams: non-finite parameters");
  }
}

MlpParams make_mlp(const std::vector<int>& dims, Activation act, std::uint64_t seed) {
  if (dims.size() < 2) throw DomainError("make_mlp: need at least input and output dims");
  MlpParams p;
  p.activation = act;
  Rng rng(seed, stream_id("mlp-init"));
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    if (in < 1 || out < 1) throw DomainError("make_mlp: nonpositive layer dim");
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-scale, scale);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(out));
    p.spectral_u.push_back(Eigen::VectorXd::Constant(in, 1.0 / std::sqrt(static_cast<double>(in))));
  }
  return p;
}

Eigen::MatrixXd forward_batch_traced(const MlpParams& p,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     ForwardTrace& trace) {
  if (X.rows() != p.input_dim()) throw DomainError("forward: input dimension mismatch");
  const int L = p.n_layers();
  trace.post.assign(static_cast<size_t>(L) + 1, Eigen::MatrixXd());
  trace.post[0] = X;
  Eigen::MatrixXd h = X;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (p.weights[l] * h).colwise() + p.biases[l];
    h = (l + 1 < L) ? activate(z, p.activation) : std::move(z);
    trace.post[static_cast<size_t>(l) + 1] = h;
  }
  return h;
}

Eigen::MatrixXd forward_batch(const MlpParams& p, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.rows() != p.input_dim()) throw DomainError("forward: input dimension mismatch");
  const int L = p.n_layers();
  Eigen::MatrixXd h = X;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (p.weights[l] * h).colwise() + p.biases[l];
    h = (l + 1 < L) ? activate(z, p.activation) : std::move(z);
  }
  return h;
}

Eigen::VectorXd forward(const MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return forward_batch(p, x).col(0);
}

Eigen::VectorXd vjp_batch(const MlpParams& p, const ForwardTrace& trace,
                          const Eigen::Ref<const Eigen::MatrixXd>& cotangents) {
  const int L = p.n_layers();
  if (trace.post.size() != static_cast<size_t>(L) + 1) throw DomainError("vjp: stale trace");
  if (cotangents.rows() != p.output_dim() || cotangents.cols() != trace.post[0].cols())
    throw DomainError("vjp: cotangent shape mismatch");

  Eigen::VectorXd grad(p.param_count());
  Eigen::MatrixXd delta = cotangents;
  Eigen::Index offsets_end = grad.size();
  // Walk layers backwards, writing each layer's block from the back.
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::MatrixXd& input = trace.post[static_cast<size_t>(l)];
    const Eigen::Index wsize = p.weights[l].size();
    const Eigen::Index bsize = p.biases[l].size();
    const Eigen::Index base = offsets_end - wsize - bsize;

    const Eigen::MatrixXd gw = delta * input.transpose();  // out x in
    // Row-major flat layout.
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        grad.data() + base, gw.rows(), gw.cols()) = gw;
    grad.segment(base + wsize, bsize) = delta.rowwise().sum();

    if (l > 0) {
      delta = p.weights[l].transpose() * delta;
      delta.array() *= activate_deriv_from_post(input, p.activation).array();
    }
    offsets_end = base;
  }
  return grad;
}

Eigen::VectorXd vjp(const MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& cotangent) {
  ForwardTrace trace;
  forward_batch_traced(p, x, trace);
  return vjp_batch(p, trace, cotangent);
}

Eigen::VectorXd jvp_params(const MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& tangent) {
  if (tangent.size() != p.param_count()) throw DomainError("jvp_params: tangent length mismatch");
  if (x.size() != p.input_dim()) throw DomainError("jvp_params: input dimension mismatch");

  const int L = p.n_layers();
  Eigen::VectorXd h = x;
  Eigen::VectorXd t = Eigen::VectorXd::Zero(x.size());
  Eigen::Index offset = 0;
  for (int l = 0; l < L; ++l) {
    const Eigen::Index wsize = p.weights[l].size();
    const Eigen::Index bsize = p.biases[l].size();
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        dw(tangent.data() + offset, p.weights[l].rows(), p.weights[l].cols());
    const Eigen::Map<const Eigen::VectorXd> db(tangent.data() + offset + wsize, bsize);
    offset += wsize + bsize;

    Eigen::VectorXd z = p.weights[l] * h + p.biases[l];
    Eigen::VectorXd tz = p.weights[l] * t + dw * h + db;
    if (l + 1 < L) {
      const Eigen::VectorXd post = activate(z, p.activation);
      tz.array() *= activate_deriv_from_post(post, p.activation).array();
      h = post;
    } else {
      h = z;
    }
    t = std::move(tz);
  }
  return t;
}

namespace {

// Largest singular value of w restricted to span{a, b}: a two-dimensional
// Rayleigh-Ritz step. Always a lower bound on the true value; it repairs the
// slow value convergence of plain power iteration when the top two singular
// values nearly tie.
double ritz_sigma(const Eigen::MatrixXd& w, Eigen::VectorXd a, const Eigen::VectorXd& b) {
  const double an = a.norm();
  if (an == 0.0) a = b;
  else a /= an;
  if (a.norm() == 0.0) return 0.0;

  Eigen::VectorXd q2 = b - a.dot(b) * a;
  const double qn = q2.norm();
  if (qn <= 1e-12 * std::max(1.0, b.norm())) return (w * a).norm();

  q2 /= qn;
  const Eigen::VectorXd wa = w * a;
  const Eigen::VectorXd wb = w * q2;
  const double g00 = wa.squaredNorm();
  const double g11 = wb.squaredNorm();
  const double g01 = wa.dot(wb);
  const double tr = g00 + g11;
  const double det = g00 * g11 - g01 * g01;
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  return std::sqrt(std::max(0.0, 0.5 * tr + disc));
}

// Runs `iters` power-iteration sweeps on w^T w, updating u in place, and
// returns the Ritz-refined top-singular-value estimate.
double power_sigma(const Eigen::MatrixXd& w, Eigen::VectorXd& u, int iters) {
  Eigen::VectorXd u_prev = u;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd v = w * u;
    const double vn = v.norm();
    if (vn == 0.0) return 0.0;
    v /= vn;
    u_prev = u;
    u = w.transpose() * v;
    const double un = u.norm();
    if (un == 0.0) return 0.0;
    u /= un;
  }
  return ritz_sigma(w, u_prev, u);
}

}  // namespace

double spectral_norm_estimate(const Eigen::MatrixXd& w, int power_iters) {
  if (power_iters < 1) throw DomainError("spectral_norm_estimate: power_iters must be >= 1");
  Eigen::VectorXd u = Eigen::VectorXd::Constant(w.cols(), 1.0 / std::sqrt(double(w.cols())));
  return power_sigma(w, u, power_iters);
}

MlpParams spectral_normalize(MlpParams p, int power_iters) {
  if (power_iters < 1) throw DomainError("spectral_normalize: power_iters must be >= 1");
  if (p.spectral_u.size() != p.weights.size()) {
    p.spectral_u.clear();
    for (const auto& w : p.weights)
      p.spectral_u.push_back(
          Eigen::VectorXd::Constant(w.cols(), 1.0 / std::sqrt(double(w.cols()))));
  }
  for (size_t l = 0; l < p.weights.size(); ++l) {
    Eigen::MatrixXd& w = p.weights[l];
    const double sigma = power_sigma(w, p.spectral_u[l], power_iters);
    if (sigma > 1.0) w /= sigma;
  }
  return p;
}

Eigen::VectorXd flatten_params(const MlpParams& p) {
  Eigen::VectorXd flat(p.param_count());
  Eigen::Index offset = 0;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    const auto& w = p.weights[l];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data() + offset, w.rows(), w.cols()) = w;
    offset += w.size();
    flat.segment(offset, p.biases[l].size()) = p.biases[l];
    offset += p.biases[l].size();
  }
  return flat;
}

void set_from_flat(MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != p.param_count()) throw DomainError("set_from_flat: length mismatch");
  Eigen::Index offset = 0;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    auto& w = p.weights[l];
    w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data() + offset, w.rows(), w.cols());
    offset += w.size();
    p.biases[l] = flat.segment(offset, p.biases[l].size());
    offset += p.biases[l].size();
  }
}

void add_scaled_flat(MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& flat, double scale) {
  if (flat.size() != p.param_count()) throw DomainError("add_scaled_flat: length mismatch");
  Eigen::Index offset = 0;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    auto& w = p.weights[l];
    w += scale *
         Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
             flat.data() + offset, w.rows(), w.cols());
    offset += w.size();
    p.biases[l] += scale * flat.segment(offset, p.biases[l].size());
    offset += p.biases[l].size();
  }
}

void sgd_step(MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& grad, double lr,
              SgdState& state) {
  if (state.velocity.size() != grad.size()) state.velocity = Eigen::VectorXd::Zero(grad.size());
  if (state.momentum != 0.0) {
    state.velocity = state.momentum * state.velocity + grad;
    add_scaled_flat(p, state.velocity, -lr);
  } else {
    add_scaled_flat(p, grad, -lr);
  }
}

namespace {
constexpr char kCheckpointMagic[8] = {'P', 'X', 'R', 'L', 'M', 'L', 'P', '1'};
}

void save_checkpoint(const MlpParams& p, const std::string& path, std::uint64_t seed) {
  p.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);

  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t n_layers = static_cast<std::uint32_t>(p.n_layers());
  const std::uint32_t act = static_cast<std::uint32_t>(p.activation);
  out.write(reinterpret_cast<const char*>(&n_layers), 4);
  out.write(reinterpret_cast<const char*>(&act), 4);
  for (int l = 0; l < p.n_layers(); ++l) {
    const std::uint32_t rows = static_cast<std::uint32_t>(p.weights[l].rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(p.weights[l].cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
  }
  const Eigen::VectorXd flat = flatten_params(p);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);

  nlohmann::json meta;
  meta["seed"] = seed;
  meta["architecture"] = p.layer_dims();
  meta["activation"] = p.activation == Activation::Tanh ? "tanh" : "relu";
  meta["format_version"] = 1;
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("save_checkpoint: cannot open sidecar for " + path);
  side << meta.dump(2) << "\n";
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::uint32_t n_layers = 0, act = 0;
  in.read(reinterpret_cast<char*>(&n_layers), 4);
  in.read(reinterpret_cast<char*>(&act), 4);
  if (!in || n_layers == 0 || n_layers > 64 || act > 1)
    throw std::runtime_error("load_checkpoint: bad header in " + path);

  MlpParams p;
  p.activation = static_cast<Activation>(act);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    if (!in || rows == 0 || cols == 0) throw std::runtime_error("load_checkpoint: bad shape");
    shapes.emplace_back(rows, cols);
  }
  for (auto [rows, cols] : shapes) {
    p.weights.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
    p.biases.emplace_back(Eigen::VectorXd::Zero(rows));
    p.spectral_u.push_back(Eigen::VectorXd::Constant(cols, 1.0 / std::sqrt(double(cols))));
  }
  Eigen::VectorXd flat(p.param_count());
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!in) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
  set_from_flat(p, flat);
  p.validate();
  return p;
}

}  // namespace proxrl
