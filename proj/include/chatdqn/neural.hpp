#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "chatdqn/binary_io.hpp"
#include "chatdqn/common.hpp"

namespace chatdqn::nn {

enum class Mode { kTrain, kInfer };

// A batch of variable-length sequences. steps[t] is features x batch; column b
// is meaningful only while t < lengths[b].
struct SeqBatch {
  std::vector<Mat> steps;
  std::vector<int> lengths;

  Eigen::Index batch() const { return static_cast<Eigen::Index>(lengths.size()); }
  std::size_t time() const { return steps.size(); }
  // 1 where (t, b) is a real position, 0 on padding.
  Eigen::RowVectorXd mask(std::size_t t) const;
  bool full(std::size_t t) const;
};

// Pads sequences (features x length each) into one batch.
SeqBatch make_batch(const std::vector<const Mat*>& sequences, Eigen::Index features);
SeqBatch make_batch(const Mat& sequence);

struct GRULayerParams {
  Mat w_r, w_z, w_h;  // hidden x input
  Mat u_r, u_z, u_h;  // hidden x hidden
  Mat b_r, b_z, b_h;  // hidden x 1

  Eigen::Index hidden_size() const { return w_r.rows(); }
  Eigen::Index input_size() const { return w_r.cols(); }
};

// One GRU step for a single column:
//   r = sigma(W_r x + U_r h + b_r), z = sigma(W_z x + U_z h + b_z)
//   c = tanh(W_h x + U_h (r . h) + b_h), h' = (1 - z) . h + z . c
Vec gru_step(const Vec& x, const Vec& h_prev, const GRULayerParams& p);

enum class LayerType : std::uint64_t { kGru = 1, kDense = 2, kDropout = 3, kBatchNorm = 4, kDueling = 5 };

struct LayerCache {
  virtual ~LayerCache() = default;
};

struct Pass {
  Mode mode = Mode::kInfer;
  bool dropout = true;
  Rng* rng = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerType type() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual Eigen::Index in_size() const = 0;
  virtual Eigen::Index out_size() const = 0;
  virtual bool recurrent() const { return false; }

  virtual std::vector<Mat*> params() { return {}; }
  virtual std::vector<std::string> param_names() const { return {}; }

  // Fills `cache` when non-null (train mode).
  virtual SeqBatch forward(const SeqBatch& in, const Pass& pass,
                           std::unique_ptr<LayerCache>* cache) const = 0;
  // Accumulates into grads (aligned with params()); returns input gradient.
  virtual SeqBatch backward(const SeqBatch& dout, const LayerCache& cache,
                            std::vector<Mat>& grads) const = 0;
  // Post-step state updates that are not gradient-driven (batch-norm statistics).
  virtual void commit(const LayerCache& /*cache*/) {}

  virtual void save(BinaryWriter& w) const = 0;
};

class GruLayer : public Layer {
 public:
  GruLayer(Eigen::Index input, Eigen::Index hidden, Rng& rng);
  explicit GruLayer(GRULayerParams p) : p_(std::move(p)) {}
  LayerType type() const override { return LayerType::kGru; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GruLayer>(*this); }
  Eigen::Index in_size() const override { return p_.input_size(); }
  Eigen::Index out_size() const override { return p_.hidden_size(); }
  bool recurrent() const override { return true; }
  std::vector<Mat*> params() override;
  std::vector<std::string> param_names() const override;
  SeqBatch forward(const SeqBatch& in, const Pass& pass,
                   std::unique_ptr<LayerCache>* cache) const override;
  SeqBatch backward(const SeqBatch& dout, const LayerCache& cache,
                    std::vector<Mat>& grads) const override;
  void save(BinaryWriter& w) const override;

  const GRULayerParams& gru() const { return p_; }
  GRULayerParams& gru() { return p_; }

 private:
  GRULayerParams p_;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(Eigen::Index input, Eigen::Index output, Rng& rng);
  DenseLayer(Mat w, Vec b) : w_(std::move(w)), b_(std::move(b)) {}
  LayerType type() const override { return LayerType::kDense; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }
  Eigen::Index in_size() const override { return w_.cols(); }
  Eigen::Index out_size() const override { return w_.rows(); }
  std::vector<Mat*> params() override { return {&w_, &b_}; }
  std::vector<std::string> param_names() const override { return {"W", "b"}; }
  SeqBatch forward(const SeqBatch& in, const Pass& pass,
                   std::unique_ptr<LayerCache>* cache) const override;
  SeqBatch backward(const SeqBatch& dout, const LayerCache& cache,
                    std::vector<Mat>& grads) const override;
  void save(BinaryWriter& w) const override;

  Mat& weight() { return w_; }
  Mat& bias() { return b_; }

 private:
  Mat w_;
  Mat b_;  // output x 1
};

// Inverted dropout; identity in infer mode or when the pass disables it.
class DropoutLayer : public Layer {
 public:
  DropoutLayer(Eigen::Index size, double rate) : size_(size), rate_(rate) {}
  LayerType type() const override { return LayerType::kDropout; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }
  Eigen::Index in_size() const override { return size_; }
  Eigen::Index out_size() const override { return size_; }
  SeqBatch forward(const SeqBatch& in, const Pass& pass,
                   std::unique_ptr<LayerCache>* cache) const override;
  SeqBatch backward(const SeqBatch& dout, const LayerCache& cache,
                    std::vector<Mat>& grads) const override;
  void save(BinaryWriter& w) const override;
  double rate() const { return rate_; }

 private:
  Eigen::Index size_;
  double rate_;
};

// Normalizes each feature over all real (batch, time) positions.
class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(Eigen::Index size, double momentum, double eps = 1e-5);
  LayerType type() const override { return LayerType::kBatchNorm; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNormLayer>(*this); }
  Eigen::Index in_size() const override { return gamma_.rows(); }
  Eigen::Index out_size() const override { return gamma_.rows(); }
  std::vector<Mat*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::string> param_names() const override { return {"gamma", "beta"}; }
  SeqBatch forward(const SeqBatch& in, const Pass& pass,
                   std::unique_ptr<LayerCache>* cache) const override;
  SeqBatch backward(const SeqBatch& dout, const LayerCache& cache,
                    std::vector<Mat>& grads) const override;
  void commit(const LayerCache& cache) override;
  void save(BinaryWriter& w) const override;

  const Vec& running_mean() const { return running_mean_; }
  const Vec& running_var() const { return running_var_; }
  void set_running(Vec mean, Vec var) {
    running_mean_ = std::move(mean);
    running_var_ = std::move(var);
  }
  double momentum() const { return momentum_; }
  double eps() const { return eps_; }
  Mat& gamma() { return gamma_; }
  Mat& beta() { return beta_; }

 private:
  Mat gamma_, beta_;
  Vec running_mean_, running_var_;
  double momentum_;
  double eps_;
};

// Q = V + A - mean(A).
class DuelingLayer : public Layer {
 public:
  DuelingLayer(Eigen::Index input, Eigen::Index actions, Rng& rng);
  DuelingLayer(Mat wv, Mat bv, Mat wa, Mat ba)
      : wv_(std::move(wv)), bv_(std::move(bv)), wa_(std::move(wa)), ba_(std::move(ba)) {}
  LayerType type() const override { return LayerType::kDueling; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DuelingLayer>(*this); }
  Eigen::Index in_size() const override { return wa_.cols(); }
  Eigen::Index out_size() const override { return wa_.rows(); }
  std::vector<Mat*> params() override { return {&wv_, &bv_, &wa_, &ba_}; }
  std::vector<std::string> param_names() const override { return {"W_v", "b_v", "W_a", "b_a"}; }
  SeqBatch forward(const SeqBatch& in, const Pass& pass,
                   std::unique_ptr<LayerCache>* cache) const override;
  SeqBatch backward(const SeqBatch& dout, const LayerCache& cache,
                    std::vector<Mat>& grads) const override;
  void save(BinaryWriter& w) const override;

 private:
  Mat wv_, bv_, wa_, ba_;
};

using Gradients = std::vector<Mat>;

// Layers up to and including the last recurrent layer process whole
// sequences; the final state of each sequence then flows through the rest.
// With no recurrent layer the input's last step is used directly.
class Network {
 public:
  struct Cache {
    std::vector<std::unique_ptr<LayerCache>> layers;
    std::vector<int> lengths;
    std::vector<Eigen::Index> reduced_rows;
    std::size_t reduced_time = 0;
    bool valid = false;
  };

  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(std::unique_ptr<Layer> layer);
  std::size_t size() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  Eigen::Index input_size() const;
  Eigen::Index output_size() const;

  // Deterministic: dropout off, batch norm on running statistics.
  Mat infer(const SeqBatch& batch) const;
  Vec infer(const Mat& sequence) const;

  // Train-mode pass that records activations for backward().
  Mat forward_train(const SeqBatch& batch, Rng* rng, Cache& cache, bool dropout = true) const;
  // Parameter gradients for an upstream gradient (output x batch).
  Gradients backward(const Cache& cache, const Mat& upstream) const;
  // Applies non-gradient state changes recorded by a train pass.
  void commit(const Cache& cache);

  std::vector<Mat*> params();
  std::vector<const Mat*> params() const;
  std::vector<std::string> param_names() const;
  std::size_t param_count() const;

  void save(BinaryWriter& w) const;
  static Network load(BinaryReader& r);

 private:
  SeqBatch run(const SeqBatch& batch, const Pass& pass, Cache* cache) const;
  std::ptrdiff_t reduce_index() const;

  std::vector<std::unique_ptr<Layer>> layers_;
};

struct NetworkSpec {
  Eigen::Index input = 100;
  Eigen::Index hidden = 256;
  Eigen::Index output = 100;
  double dropout = 0.2;
  bool dueling = false;
  bool batch_norm = false;
  double bn_momentum = 0.99;
};

// GRU -> [BatchNorm] -> Dropout -> GRU -> Dropout -> Dense | Dueling head.
Network build_network(const NetworkSpec& spec, Rng& rng);

// Closed-form count for two GRU layers and a dense head.
std::size_t gru_dense_param_count(std::size_t input, std::size_t hidden, std::size_t output);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Mat> m;
  std::vector<Mat> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam update. Throws std::domain_error naming the first
// parameter with a non-finite gradient; nothing is modified in that case.
void adam_step(const std::vector<Mat*>& params, const Gradients& grads, AdamState& state,
               const std::vector<std::string>& names = {});
void adam_step(Network& net, const Gradients& grads, AdamState& state);

// Central differences (step 1e-5) against backward() for the loss
// sum((y - target)^2), run in train mode with dropout disabled. Returns the
// max over parameters of |g_bp - g_fd| / max(1, |g_bp|, |g_fd|).
double finite_diff_check(Network& net, const SeqBatch& batch, const Mat& target);
double finite_diff_check(Network& net, const Mat& sequence, const Vec& target);

}  // namespace chatdqn::nn
