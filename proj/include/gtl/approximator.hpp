#ifndef GTL_APPROXIMATOR_HPP_
#define GTL_APPROXIMATOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gtl/common.hpp"
#include "gtl/taskspace.hpp"

namespace gtl {

/// Feedforward features followed by an upsample + convolution decoder.
///
/// Channel schedule: N_ch = p 2^(N_up - 2) at the input end, max(p, N_ch / 2^i) after
/// upsampling step i, then a pointwise linear head to p channels cropped to L_T.
struct NetConfig {
  int n_hidden = 2;      // N_h
  int hidden_size = 64;  // L_h
  int n_upsample = 4;    // N_up
  int kernel_len = 5;    // N_k, odd
  int state_dim = 2;     // p
  int seq_len = 64;      // L_T
  int task_dim = 1;      // m
  // Fixed input normalization (tau - center) / scale, usually the task box.
  Vec input_center;
  Vec input_scale;

  int channels() const { return state_dim * (1 << (n_upsample - 2)); }
  int initial_length() const {
    const int f = 1 << n_upsample;
    return (seq_len + f - 1) / f;
  }
  int channels_after(int step) const { return std::max(state_dim, channels() >> step); }

  void validate() const {
    require(n_hidden >= 0, "n_hidden must be >= 0", "invalid_config");
    require(hidden_size >= 1, "hidden_size must be >= 1", "invalid_config");
    require(n_upsample >= 2 && n_upsample <= 12, "n_upsample must be in [2, 12]", "invalid_config");
    require(kernel_len >= 1 && kernel_len % 2 == 1, "kernel_len must be odd and >= 1",
            "invalid_config");
    require(state_dim >= 1 && seq_len >= 2 && task_dim >= 1, "network dimensions must be positive",
            "invalid_config");
    require(input_center.size() == 0 || input_center.size() == task_dim,
            "input_center length must equal task_dim", "invalid_config");
    require(input_scale.size() == 0 || input_scale.size() == task_dim,
            "input_scale length must equal task_dim", "invalid_config");
    for (Eigen::Index j = 0; j < input_scale.size(); ++j)
      require(input_scale[j] > 0.0, "input_scale must be positive", "invalid_config");
  }
};

/// Flat parameter vector W with the config and the initialization seed.
struct ApproximatorWeights {
  NetConfig config;
  Vec params;
  std::uint64_t seed = 0;
};

struct Prediction {
  Mat states;  // L_T x p
  double duration = 0.0;
};

/// Per-task regression target; multiplier shifts are already folded in by the caller.
struct RegressionTarget {
  Mat states;
  double duration = 0.0;
};

namespace detail {

inline Mat upsample2(const Mat& a) {
  Mat out(a.rows(), 2 * a.cols());
  for (Eigen::Index t = 0; t < a.cols(); ++t) {
    out.col(2 * t) = a.col(t);
    out.col(2 * t + 1) = a.col(t);
  }
  return out;
}

}  // namespace detail

/// Parameter layout and the forward/backward passes for one NetConfig.
class Network {
 public:
  struct Cache {
    std::vector<Vec> hidden;  // h_0 = normalized input, h_1..h_Nh
    Mat features;             // N_ch x L_seq
    std::vector<Mat> up;      // input to each conv (upsampled)
    std::vector<Mat> act;     // tanh output of each conv
  };

  explicit Network(NetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int off = 0;
    int in = cfg_.task_dim;
    for (int l = 0; l < cfg_.n_hidden; ++l) {
      dense_.push_back({off, cfg_.hidden_size, in});
      off += cfg_.hidden_size * in + cfg_.hidden_size;
      in = cfg_.hidden_size;
    }
    last_hidden_ = in;
    feature_ = {off, cfg_.channels() * cfg_.initial_length(), in};
    off += feature_.out * in + feature_.out;
    int c = cfg_.channels();
    for (int i = 1; i <= cfg_.n_upsample; ++i) {
      const int co = cfg_.channels_after(i);
      conv_.push_back({off, co, c});
      off += co * c * cfg_.kernel_len + co;
      c = co;
    }
    head_ = {off, cfg_.state_dim, c};
    off += cfg_.state_dim * c + cfg_.state_dim;
    duration_ = {off, 1, last_hidden_};
    off += last_hidden_ + 1;
    n_params_ = off;
  }

  const NetConfig& config() const { return cfg_; }
  int num_params() const { return n_params_; }

  /// Fan-in uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
  ApproximatorWeights init(std::uint64_t seed) const {
    ApproximatorWeights w{cfg_, Vec::Zero(n_params_), seed};
    std::mt19937_64 rng(seed);
    auto fill = [&](int off, int count, int fan_in) {
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      for (int i = 0; i < count; ++i) w.params[off + i] = u(rng);
    };
    for (const auto& d : dense_) fill(d.off, d.out * d.in, d.in);
    fill(feature_.off, feature_.out * feature_.in, feature_.in);
    for (const auto& c : conv_) fill(c.off, c.out * c.in * cfg_.kernel_len, c.in * cfg_.kernel_len);
    fill(head_.off, head_.out * head_.in, head_.in);
    fill(duration_.off, duration_.in, duration_.in);
    return w;
  }

  Prediction forward(const Vec& params, const Task& task, Cache* cache = nullptr) const {
    require(task.dims() == cfg_.task_dim, "task dimension does not match the network");
    require(params.size() == n_params_, "weight vector length does not match the network");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.hidden.clear();
    c.up.clear();
    c.act.clear();
    Vec h = task.coords;
    if (cfg_.input_center.size()) h -= cfg_.input_center;
    if (cfg_.input_scale.size()) h = h.cwiseQuotient(cfg_.input_scale);
    c.hidden.push_back(h);
    for (const auto& d : dense_) {
      h = (weight(params, d) * h + bias(params, d)).array().tanh().matrix();
      c.hidden.push_back(h);
    }
    const Vec f = (weight(params, feature_) * h + bias(params, feature_)).array().tanh().matrix();
    const int L0 = cfg_.initial_length();
    c.features.resize(cfg_.channels(), L0);
    for (int ch = 0; ch < cfg_.channels(); ++ch) c.features.row(ch) = f.segment(ch * L0, L0).transpose();
    Mat a = c.features;
    for (const auto& layer : conv_) {
      Mat u = detail::upsample2(a);
      a = conv(params, layer, u).array().tanh().matrix();
      c.up.push_back(std::move(u));
      c.act.push_back(a);
    }
    const Mat y = weight(params, head_) * a.leftCols(cfg_.seq_len);
    Prediction out;
    out.states = (y.colwise() + bias(params, head_)).transpose();
    out.duration = params.segment(duration_.off, duration_.in).dot(h) + params[duration_.off + duration_.in];
    return out;
  }

  /// Accumulates d(loss)/dW into grad given d(loss)/dX (L_T x p) and d(loss)/dT.
  void backward(const Vec& params, const Cache& c, const Mat& dX, double dT, Vec& grad) const {
    const Vec& h_last = c.hidden.back();
    // duration head
    grad.segment(duration_.off, duration_.in) += dT * h_last;
    grad[duration_.off + duration_.in] += dT;
    Vec dh = dT * params.segment(duration_.off, duration_.in);

    // state head: y = Wh a[:, :L_T] + bh
    const Mat& a_last = c.act.back();
    const Mat dY = dX.transpose();  // p x L_T
    weight_grad(grad, head_) += dY * a_last.leftCols(cfg_.seq_len).transpose();
    grad.segment(head_.off + head_.out * head_.in, head_.out) += dY.rowwise().sum();
    Mat da = Mat::Zero(a_last.rows(), a_last.cols());
    da.leftCols(cfg_.seq_len) = weight(params, head_).transpose() * dY;

    for (int i = static_cast<int>(conv_.size()) - 1; i >= 0; --i) {
      const Mat dz = da.cwiseProduct((1.0 - c.act[i].array().square()).matrix());
      const Mat du = conv_backward(params, conv_[i], c.up[i], dz, grad);
      da.resize(du.rows(), du.cols() / 2);
      for (Eigen::Index t = 0; t < da.cols(); ++t) da.col(t) = du.col(2 * t) + du.col(2 * t + 1);
    }

    // feature layer
    const int L0 = cfg_.initial_length();
    Vec df(feature_.out);
    for (int ch = 0; ch < cfg_.channels(); ++ch) {
      df.segment(ch * L0, L0) =
          (da.row(ch).array() * (1.0 - c.features.row(ch).array().square())).transpose();
    }
    weight_grad(grad, feature_) += df * h_last.transpose();
    grad.segment(feature_.off + feature_.out * feature_.in, feature_.out) += df;
    dh += weight(params, feature_).transpose() * df;

    for (int l = static_cast<int>(dense_.size()) - 1; l >= 0; --l) {
      const Vec& out = c.hidden[l + 1];
      const Vec dz = dh.cwiseProduct((1.0 - out.array().square()).matrix());
      weight_grad(grad, dense_[l]) += dz * c.hidden[l].transpose();
      grad.segment(dense_[l].off + dense_[l].out * dense_[l].in, dense_[l].out) += dz;
      dh = weight(params, dense_[l]).transpose() * dz;
    }
  }

  /// Ordered layer kinds; the decoder never uses a transposed convolution.
  std::vector<std::string> layer_inventory() const {
    std::vector<std::string> inv;
    for (std::size_t l = 0; l < dense_.size(); ++l) inv.push_back("dense_tanh");
    inv.push_back("feature_dense_tanh");
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      inv.push_back("upsample_nearest_x2");
      inv.push_back("conv1d_same_tanh");
    }
    inv.push_back("pointwise_linear_head");
    inv.push_back("crop");
    inv.push_back("duration_linear_head");
    return inv;
  }

 private:
  struct Block {
    int off, out, in;
  };
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;

  static CMap weight(const Vec& p, const Block& b) { return CMap(p.data() + b.off, b.out, b.in); }
  static Eigen::Map<const Vec> bias(const Vec& p, const Block& b) {
    return Eigen::Map<const Vec>(p.data() + b.off + b.out * b.in, b.out);
  }
  // conv taps: W_j (out x in, column-major) at off + j * in * out, then the bias
  static MMap weight_grad(Vec& g, const Block& b) { return MMap(g.data() + b.off, b.out, b.in); }

  Mat conv(const Vec& p, const Block& b, const Mat& u) const {
    const int len = static_cast<int>(u.cols());
    const int half = cfg_.kernel_len / 2;
    Mat z = Eigen::Map<const Vec>(p.data() + b.off + b.out * b.in * cfg_.kernel_len, b.out).replicate(1, len);
    for (int j = 0; j < cfg_.kernel_len; ++j) {
      const int shift = j - half;  // z[:, t] += W_j u[:, t + shift]
      const int t0 = std::max(0, -shift), t1 = std::min(len, len - shift);
      if (t1 <= t0) continue;
      const CMap Wj(p.data() + b.off + j * b.in * b.out, b.out, b.in);
      z.middleCols(t0, t1 - t0).noalias() += Wj * u.middleCols(t0 + shift, t1 - t0);
    }
    return z;
  }

  Mat conv_backward(const Vec& p, const Block& b, const Mat& u, const Mat& dz, Vec& grad) const {
    const int len = static_cast<int>(u.cols());
    const int half = cfg_.kernel_len / 2;
    Mat du = Mat::Zero(u.rows(), len);
    for (int j = 0; j < cfg_.kernel_len; ++j) {
      const int shift = j - half;
      const int t0 = std::max(0, -shift), t1 = std::min(len, len - shift);
      if (t1 <= t0) continue;
      const CMap Wj(p.data() + b.off + j * b.in * b.out, b.out, b.in);
      MMap gWj(grad.data() + b.off + j * b.in * b.out, b.out, b.in);
      gWj.noalias() += dz.middleCols(t0, t1 - t0) * u.middleCols(t0 + shift, t1 - t0).transpose();
      du.middleCols(t0 + shift, t1 - t0).noalias() += Wj.transpose() * dz.middleCols(t0, t1 - t0);
    }
    grad.segment(b.off + b.out * b.in * cfg_.kernel_len, b.out) += dz.rowwise().sum();
    return du;
  }

  NetConfig cfg_;
  std::vector<Block> dense_;
  Block feature_{};
  std::vector<Block> conv_;
  Block head_{};
  Block duration_{};
  int last_hidden_ = 0;
  int n_params_ = 0;
};

inline ApproximatorWeights init_weights(const NetConfig& cfg, std::uint64_t seed) {
  return Network(cfg).init(seed);
}

inline Prediction predict(const ApproximatorWeights& w, const Task& task) {
  return Network(w.config).forward(w.params, task);
}

inline std::vector<Prediction> predict_all(const ApproximatorWeights& w, const TaskSet& tasks) {
  const Network net(w.config);
  std::vector<Prediction> out;
  out.reserve(tasks.size());
  for (const Task& t : tasks.tasks) out.push_back(net.forward(w.params, t));
  return out;
}

/// R_gamma = sum_i |X_i - Xhat_i|_F^2 + gamma (T_i - That_i)^2.
inline double reconstruction_error(const ApproximatorWeights& w,
                                   const std::vector<RegressionTarget>& targets,
                                   const TaskSet& tasks, double gamma) {
  require(targets.size() == tasks.size(), "targets and tasks must be aligned");
  const Network net(w.config);
  double total = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Prediction pr = net.forward(w.params, tasks[i]);
    const double dT = targets[i].duration - pr.duration;
    total += (targets[i].states - pr.states).squaredNorm() + gamma * dT * dT;
  }
  return total;
}

/// Value and gradient of R_gamma over the subset `idx`.
inline double reconstruction_gradient(const Network& net, const Vec& params,
                                      const std::vector<RegressionTarget>& targets,
                                      const TaskSet& tasks, double gamma,
                                      const std::vector<std::size_t>& idx, Vec& grad) {
  grad.setZero(net.num_params());
  Network::Cache cache;
  double total = 0.0;
  for (std::size_t i : idx) {
    const Prediction pr = net.forward(params, tasks[i], &cache);
    const Mat r = pr.states - targets[i].states;
    const double rT = pr.duration - targets[i].duration;
    total += r.squaredNorm() + gamma * rT * rT;
    net.backward(params, cache, 2.0 * r, 2.0 * gamma * rT, grad);
  }
  return total;
}

/// Per task, max over nodes and state components of |X_i - Xhat_i|.
inline std::vector<double> norm_inf_error(const ApproximatorWeights& w,
                                          const std::vector<RegressionTarget>& targets,
                                          const TaskSet& tasks) {
  require(targets.size() == tasks.size(), "targets and tasks must be aligned");
  const Network net(w.config);
  std::vector<double> out(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i)
    out[i] = (targets[i].states - net.forward(w.params, tasks[i]).states).lpNorm<Eigen::Infinity>();
  return out;
}

struct ErrorStats {
  double mean = 0.0;
  double max = 0.0;
  double mode = 0.0;  // centre of the fullest histogram bin
  std::vector<double> thresholds;
  std::vector<double> exceed_fraction;  // fraction of errors strictly above each threshold
};

inline ErrorStats error_statistics(const std::vector<double>& errors,
                                   const std::vector<double>& thresholds, int bins = 50) {
  require(!errors.empty(), "error_statistics needs at least one error");
  require(bins >= 1, "histogram needs at least one bin");
  ErrorStats s;
  s.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
  s.max = *std::max_element(errors.begin(), errors.end());
  const double lo = *std::min_element(errors.begin(), errors.end());
  const double width = (s.max - lo) / bins;
  if (width <= 0.0) {
    s.mode = lo;
  } else {
    std::vector<int> count(bins, 0);
    for (double e : errors) ++count[std::min(bins - 1, static_cast<int>((e - lo) / width))];
    const int b = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
    s.mode = lo + (b + 0.5) * width;
  }
  s.thresholds = thresholds;
  for (double th : thresholds) {
    const auto n = std::count_if(errors.begin(), errors.end(), [th](double e) { return e > th; });
    s.exceed_fraction.push_back(static_cast<double>(n) / errors.size());
  }
  return s;
}

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 0;  // 0 means full batch
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.01;  // cosine decay floor
  double momentum = 0.9;
  std::string optimizer = "adam";   // "adam" | "momentum"
  std::uint64_t seed = 0;

  void validate() const {
    require(epochs >= 0, "epochs must be >= 0", "invalid_config");
    require(batch_size >= 0, "batch_size must be >= 0", "invalid_config");
    require(learning_rate > 0.0, "learning_rate must be > 0", "invalid_config");
    require(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0,
            "final_lr_fraction must be in [0, 1]", "invalid_config");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)", "invalid_config");
    require(optimizer == "adam" || optimizer == "momentum", "optimizer must be adam or momentum",
            "invalid_config");
  }
};

struct TrainReport {
  ApproximatorWeights weights;  // best full-batch weights seen
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // full-batch R_gamma after each epoch
};

/// Minimizes R_gamma from w0. Returns the best full-batch iterate, so the loss never exceeds
/// the starting loss. Throws kind "divergence" on a non-finite loss.
inline TrainReport train(const ApproximatorWeights& w0, const std::vector<RegressionTarget>& targets,
                         const TaskSet& tasks, double gamma, const TrainConfig& cfg) {
  cfg.validate();
  require(targets.size() == tasks.size() && !tasks.tasks.empty(),
          "training needs aligned, non-empty targets and tasks");
  require(gamma > 0.0, "gamma must be > 0");
  const Network net(w0.config);
  const std::size_t n = tasks.size();
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min<std::size_t>(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  TrainReport rep;
  rep.weights = w0;
  Vec params = w0.params;
  Vec grad;
  auto full_loss = [&](const Vec& prm) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Prediction pr = net.forward(prm, tasks[i]);
      const double dT = targets[i].duration - pr.duration;
      total += (targets[i].states - pr.states).squaredNorm() + gamma * dT * dT;
    }
    return total;
  };
  double loss = full_loss(params);
  rep.initial_loss = loss;
  double best = loss;
  Vec m1 = Vec::Zero(params.size()), m2 = Vec::Zero(params.size());
  long step = 0;
  const long total_steps = static_cast<long>(cfg.epochs) * ((n + batch - 1) / batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::vector<std::size_t> idx(order.begin() + b0, order.begin() + std::min(n, b0 + batch));
      reconstruction_gradient(net, params, targets, tasks, gamma, idx, grad);
      grad /= static_cast<double>(idx.size());
      const double progress = total_steps > 1 ? static_cast<double>(step) / (total_steps - 1) : 1.0;
      const double lr = cfg.learning_rate * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) *
                                                                         0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      ++step;
      if (cfg.optimizer == "adam") {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        m1 = b1 * m1 + (1.0 - b1) * grad;
        m2 = b2 * m2 + (1.0 - b2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        params -= lr * ((m1 / c1).array() / ((m2 / c2).array().sqrt() + eps)).matrix();
      } else {
        m1 = cfg.momentum * m1 + grad;
        params -= lr * m1;
      }
    }
    loss = full_loss(params);
    if (!std::isfinite(loss)) throw Error("divergence", "training loss became non-finite");
    rep.loss_history.push_back(loss);
    if (loss < best) {
      best = loss;
      rep.weights.params = params;
    }
  }
  rep.final_loss = best;
  return rep;
}

}  // namespace gtl

#endif  // GTL_APPROXIMATOR_HPP_
