#include "chatdqn/neural.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chatdqn::nn {

namespace {

Mat sigmoid(const Mat& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void scale_columns(Mat& m, const Eigen::RowVectorXd& s) { m.array().rowwise() *= s.array(); }

void check_input(const SeqBatch& in, Eigen::Index expected, const char* layer) {
  for (const auto& s : in.steps) {
    if (s.rows() != expected || s.cols() != in.batch()) {
      throw std::invalid_argument(std::string(layer) + " expects " + std::to_string(expected) +
                                  " input features, got " + std::to_string(s.rows()));
    }
  }
}

std::vector<Mat> zeros_like(const std::vector<Mat*>& ps) {
  std::vector<Mat> out;
  out.reserve(ps.size());
  for (const auto* p : ps) out.push_back(Mat::Zero(p->rows(), p->cols()));
  return out;
}

const char* type_name(LayerType t) {
  switch (t) {
    case LayerType::kGru: return "gru";
    case LayerType::kDense: return "dense";
    case LayerType::kDropout: return "dropout";
    case LayerType::kBatchNorm: return "batchnorm";
    case LayerType::kDueling: return "dueling";
  }
  return "unknown";
}

}  // namespace

Eigen::RowVectorXd SeqBatch::mask(std::size_t t) const {
  Eigen::RowVectorXd m(batch());
  for (Eigen::Index b = 0; b < batch(); ++b) {
    m[b] = static_cast<std::size_t>(lengths[static_cast<std::size_t>(b)]) > t ? 1.0 : 0.0;
  }
  return m;
}

bool SeqBatch::full(std::size_t t) const {
  return std::all_of(lengths.begin(), lengths.end(),
                     [t](int len) { return static_cast<std::size_t>(len) > t; });
}

SeqBatch make_batch(const std::vector<const Mat*>& sequences, Eigen::Index features) {
  SeqBatch batch;
  const auto n = static_cast<Eigen::Index>(sequences.size());
  Eigen::Index longest = 0;
  for (const auto* s : sequences) {
    if (s->cols() > 0 && s->rows() != features) {
      throw std::invalid_argument("sequence has " + std::to_string(s->rows()) +
                                  " features, expected " + std::to_string(features));
    }
    longest = std::max(longest, s->cols());
    batch.lengths.push_back(static_cast<int>(s->cols()));
  }
  batch.steps.assign(static_cast<std::size_t>(longest), Mat::Zero(features, n));
  for (Eigen::Index b = 0; b < n; ++b) {
    const Mat& s = *sequences[static_cast<std::size_t>(b)];
    for (Eigen::Index t = 0; t < s.cols(); ++t) batch.steps[static_cast<std::size_t>(t)].col(b) = s.col(t);
  }
  return batch;
}

SeqBatch make_batch(const Mat& sequence) { return make_batch({&sequence}, sequence.rows()); }

Vec gru_step(const Vec& x, const Vec& h_prev, const GRULayerParams& p) {
  if (x.size() != p.input_size() || h_prev.size() != p.hidden_size()) {
    throw std::invalid_argument("gru_step: shape mismatch");
  }
  const Vec r = sigmoid(p.w_r * x + p.u_r * h_prev + p.b_r);
  const Vec z = sigmoid(p.w_z * x + p.u_z * h_prev + p.b_z);
  const Vec c = (p.w_h * x + p.u_h * r.cwiseProduct(h_prev) + p.b_h).array().tanh().matrix();
  return (Vec::Ones(z.size()) - z).cwiseProduct(h_prev) + z.cwiseProduct(c);
}

// ---------------------------------------------------------------------------
// GRU

namespace {

struct GruCache : LayerCache {
  std::vector<Mat> x, h_prev, r, z, c;
  std::vector<Eigen::RowVectorXd> mask;
  std::vector<bool> full;
};

}  // namespace

GruLayer::GruLayer(Eigen::Index input, Eigen::Index hidden, Rng& rng) {
  p_.w_r = glorot(hidden, input, rng);
  p_.w_z = glorot(hidden, input, rng);
  p_.w_h = glorot(hidden, input, rng);
  p_.u_r = glorot(hidden, hidden, rng);
  p_.u_z = glorot(hidden, hidden, rng);
  p_.u_h = glorot(hidden, hidden, rng);
  p_.b_r = Mat::Zero(hidden, 1);
  p_.b_z = Mat::Zero(hidden, 1);
  p_.b_h = Mat::Zero(hidden, 1);
}

std::vector<Mat*> GruLayer::params() {
  return {&p_.w_r, &p_.w_z, &p_.w_h, &p_.u_r, &p_.u_z, &p_.u_h, &p_.b_r, &p_.b_z, &p_.b_h};
}

std::vector<std::string> GruLayer::param_names() const {
  return {"W_r", "W_z", "W_h", "U_r", "U_z", "U_h", "b_r", "b_z", "b_h"};
}

SeqBatch GruLayer::forward(const SeqBatch& in, const Pass& /*pass*/,
                           std::unique_ptr<LayerCache>* cache) const {
  check_input(in, p_.input_size(), "gru layer");
  const auto hidden = p_.hidden_size();
  const auto b = in.batch();
  GruCache* gc = nullptr;
  if (cache) {
    auto owned = std::make_unique<GruCache>();
    gc = owned.get();
    *cache = std::move(owned);
  }

  SeqBatch out;
  out.lengths = in.lengths;
  out.steps.reserve(in.time());
  Mat h = Mat::Zero(hidden, b);
  for (std::size_t t = 0; t < in.time(); ++t) {
    const Mat& x = in.steps[t];
    Mat a_r = p_.w_r * x;
    a_r.noalias() += p_.u_r * h;
    a_r.colwise() += p_.b_r.col(0);
    Mat r = sigmoid(a_r);

    Mat a_z = p_.w_z * x;
    a_z.noalias() += p_.u_z * h;
    a_z.colwise() += p_.b_z.col(0);
    Mat z = sigmoid(a_z);

    Mat a_c = p_.w_h * x;
    a_c.noalias() += p_.u_h * r.cwiseProduct(h);
    a_c.colwise() += p_.b_h.col(0);
    Mat c = a_c.array().tanh().matrix();

    Mat next = h + z.cwiseProduct(c - h);
    const bool full = in.full(t);
    Eigen::RowVectorXd m;
    if (!full) {
      m = in.mask(t);
      Mat delta = next - h;
      scale_columns(delta, m);
      next = h + delta;
    }
    if (gc) {
      gc->x.push_back(x);
      gc->h_prev.push_back(h);
      gc->r.push_back(std::move(r));
      gc->z.push_back(std::move(z));
      gc->c.push_back(std::move(c));
      gc->mask.push_back(std::move(m));
      gc->full.push_back(full);
    }
    h = std::move(next);
    out.steps.push_back(h);
  }
  return out;
}

SeqBatch GruLayer::backward(const SeqBatch& dout, const LayerCache& cache,
                            std::vector<Mat>& grads) const {
  const auto& gc = dynamic_cast<const GruCache&>(cache);
  const auto hidden = p_.hidden_size();
  const auto b = dout.batch();
  const std::size_t time = gc.x.size();
  Mat& g_wr = grads[0];
  Mat& g_wz = grads[1];
  Mat& g_wh = grads[2];
  Mat& g_ur = grads[3];
  Mat& g_uz = grads[4];
  Mat& g_uh = grads[5];
  Mat& g_br = grads[6];
  Mat& g_bz = grads[7];
  Mat& g_bh = grads[8];

  SeqBatch din;
  din.lengths = dout.lengths;
  din.steps.resize(time);
  Mat dh = Mat::Zero(hidden, b);
  for (std::size_t t = time; t-- > 0;) {
    Mat dnext = dout.steps[t] + dh;
    Mat carry;
    if (!gc.full[t]) {
      carry = dnext;
      scale_columns(carry, Eigen::RowVectorXd::Ones(b) - gc.mask[t]);
      scale_columns(dnext, gc.mask[t]);
    }
    const Mat& x = gc.x[t];
    const Mat& hp = gc.h_prev[t];
    const Mat& r = gc.r[t];
    const Mat& z = gc.z[t];
    const Mat& c = gc.c[t];

    const Mat dz = dnext.cwiseProduct(c - hp);
    const Mat dc = dnext.cwiseProduct(z);
    Mat dhp = dnext - dnext.cwiseProduct(z);

    const Mat dc_pre = (dc.array() * (1.0 - c.array().square())).matrix();
    const Mat rh = r.cwiseProduct(hp);
    g_wh.noalias() += dc_pre * x.transpose();
    g_uh.noalias() += dc_pre * rh.transpose();
    g_bh += dc_pre.rowwise().sum();
    const Mat drh = p_.u_h.transpose() * dc_pre;
    const Mat dr = drh.cwiseProduct(hp);
    dhp += drh.cwiseProduct(r);

    const Mat dz_pre = (dz.array() * z.array() * (1.0 - z.array())).matrix();
    const Mat dr_pre = (dr.array() * r.array() * (1.0 - r.array())).matrix();
    g_wz.noalias() += dz_pre * x.transpose();
    g_uz.noalias() += dz_pre * hp.transpose();
    g_bz += dz_pre.rowwise().sum();
    g_wr.noalias() += dr_pre * x.transpose();
    g_ur.noalias() += dr_pre * hp.transpose();
    g_br += dr_pre.rowwise().sum();
    dhp.noalias() += p_.u_z.transpose() * dz_pre;
    dhp.noalias() += p_.u_r.transpose() * dr_pre;

    Mat dx = p_.w_h.transpose() * dc_pre;
    dx.noalias() += p_.w_z.transpose() * dz_pre;
    dx.noalias() += p_.w_r.transpose() * dr_pre;
    din.steps[t] = std::move(dx);

    dh = std::move(dhp);
    if (!gc.full[t]) dh += carry;
  }
  return din;
}

void GruLayer::save(BinaryWriter& w) const {
  for (const Mat* m : const_cast<GruLayer*>(this)->params()) w.mat(*m);
}

// ---------------------------------------------------------------------------
// Dense

namespace {

struct InputCache : LayerCache {
  std::vector<Mat> x;
};

}  // namespace

DenseLayer::DenseLayer(Eigen::Index input, Eigen::Index output, Rng& rng)
    : w_(glorot(output, input, rng)), b_(Mat::Zero(output, 1)) {}

SeqBatch DenseLayer::forward(const SeqBatch& in, const Pass& /*pass*/,
                             std::unique_ptr<LayerCache>* cache) const {
  check_input(in, w_.cols(), "dense layer");
  SeqBatch out;
  out.lengths = in.lengths;
  out.steps.reserve(in.time());
  for (const auto& x : in.steps) {
    Mat y = w_ * x;
    y.colwise() += b_.col(0);
    out.steps.push_back(std::move(y));
  }
  if (cache) {
    auto ic = std::make_unique<InputCache>();
    ic->x = in.steps;
    *cache = std::move(ic);
  }
  return out;
}

SeqBatch DenseLayer::backward(const SeqBatch& dout, const LayerCache& cache,
                              std::vector<Mat>& grads) const {
  const auto& ic = dynamic_cast<const InputCache&>(cache);
  SeqBatch din;
  din.lengths = dout.lengths;
  for (std::size_t t = 0; t < ic.x.size(); ++t) {
    grads[0].noalias() += dout.steps[t] * ic.x[t].transpose();
    grads[1] += dout.steps[t].rowwise().sum();
    din.steps.push_back(w_.transpose() * dout.steps[t]);
  }
  return din;
}

void DenseLayer::save(BinaryWriter& w) const {
  w.mat(w_);
  w.mat(b_);
}

// ---------------------------------------------------------------------------
// Dropout

namespace {

struct DropoutCache : LayerCache {
  bool active = false;
  std::vector<Mat> keep;  // already scaled by 1 / (1 - rate)
};

}  // namespace

SeqBatch DropoutLayer::forward(const SeqBatch& in, const Pass& pass,
                               std::unique_ptr<LayerCache>* cache) const {
  const bool active = pass.mode == Mode::kTrain && pass.dropout && rate_ > 0.0;
  auto dc = std::make_unique<DropoutCache>();
  dc->active = active;
  SeqBatch out;
  if (!active) {
    out = in;
  } else {
    if (!pass.rng) throw std::logic_error("dropout in train mode needs a random source");
    out.lengths = in.lengths;
    const double scale = 1.0 / (1.0 - rate_);
    for (const auto& x : in.steps) {
      Mat keep(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < keep.size(); ++i) {
        keep.data()[i] = uniform01(*pass.rng) >= rate_ ? scale : 0.0;
      }
      out.steps.push_back(x.cwiseProduct(keep));
      dc->keep.push_back(std::move(keep));
    }
  }
  if (cache) *cache = std::move(dc);
  return out;
}

SeqBatch DropoutLayer::backward(const SeqBatch& dout, const LayerCache& cache,
                                std::vector<Mat>& /*grads*/) const {
  const auto& dc = dynamic_cast<const DropoutCache&>(cache);
  if (!dc.active) return dout;
  SeqBatch din;
  din.lengths = dout.lengths;
  for (std::size_t t = 0; t < dout.time(); ++t) din.steps.push_back(dout.steps[t].cwiseProduct(dc.keep[t]));
  return din;
}

void DropoutLayer::save(BinaryWriter& w) const {
  w.u64(static_cast<std::uint64_t>(size_));
  w.f64(rate_);
}

// ---------------------------------------------------------------------------
// Batch normalization

namespace {

struct BatchNormCache : LayerCache {
  bool batch_stats = false;
  double count = 0.0;
  Vec mean, var, inv_std;
  std::vector<Mat> xhat;
  std::vector<Eigen::RowVectorXd> mask;
};

}  // namespace

BatchNormLayer::BatchNormLayer(Eigen::Index size, double momentum, double eps)
    : gamma_(Mat::Ones(size, 1)),
      beta_(Mat::Zero(size, 1)),
      running_mean_(Vec::Zero(size)),
      running_var_(Vec::Ones(size)),
      momentum_(momentum),
      eps_(eps) {}

SeqBatch BatchNormLayer::forward(const SeqBatch& in, const Pass& pass,
                                 std::unique_ptr<LayerCache>* cache) const {
  check_input(in, gamma_.rows(), "batch-norm layer");
  const auto f = gamma_.rows();
  auto bc = std::make_unique<BatchNormCache>();
  for (std::size_t t = 0; t < in.time(); ++t) bc->mask.push_back(in.mask(t));
  for (const auto& m : bc->mask) bc->count += m.sum();

  bc->batch_stats = pass.mode == Mode::kTrain && bc->count > 0.0;
  if (bc->batch_stats) {
    bc->mean = Vec::Zero(f);
    for (std::size_t t = 0; t < in.time(); ++t) bc->mean += in.steps[t] * bc->mask[t].transpose();
    bc->mean /= bc->count;
    bc->var = Vec::Zero(f);
    for (std::size_t t = 0; t < in.time(); ++t) {
      Mat d = in.steps[t].colwise() - bc->mean;
      bc->var += d.cwiseProduct(d) * bc->mask[t].transpose();
    }
    bc->var /= bc->count;
  } else {
    bc->mean = running_mean_;
    bc->var = running_var_;
  }
  bc->inv_std = (bc->var.array() + eps_).rsqrt().matrix();

  SeqBatch out;
  out.lengths = in.lengths;
  for (const auto& x : in.steps) {
    Mat xhat = x.colwise() - bc->mean;
    xhat.array().colwise() *= bc->inv_std.array();
    Mat y = xhat;
    y.array().colwise() *= gamma_.col(0).array();
    y.colwise() += beta_.col(0);
    out.steps.push_back(std::move(y));
    if (cache) bc->xhat.push_back(std::move(xhat));
  }
  if (cache) *cache = std::move(bc);
  return out;
}

SeqBatch BatchNormLayer::backward(const SeqBatch& dout, const LayerCache& cache,
                                  std::vector<Mat>& grads) const {
  const auto& bc = dynamic_cast<const BatchNormCache&>(cache);
  const auto f = gamma_.rows();
  SeqBatch din;
  din.lengths = dout.lengths;
  std::vector<Mat> dxhat;
  Vec sum1 = Vec::Zero(f);
  Vec sum2 = Vec::Zero(f);
  for (std::size_t t = 0; t < bc.xhat.size(); ++t) {
    Mat dy = dout.steps[t];
    scale_columns(dy, bc.mask[t]);
    grads[0] += dy.cwiseProduct(bc.xhat[t]).rowwise().sum();
    grads[1] += dy.rowwise().sum();
    Mat d = dy;
    d.array().colwise() *= gamma_.col(0).array();
    sum1 += d.rowwise().sum();
    sum2 += d.cwiseProduct(bc.xhat[t]).rowwise().sum();
    dxhat.push_back(std::move(d));
  }
  for (std::size_t t = 0; t < dxhat.size(); ++t) {
    Mat dx = dxhat[t];
    if (bc.batch_stats) {
      dx.colwise() -= sum1 / bc.count;
      Mat corr = bc.xhat[t];
      corr.array().colwise() *= (sum2 / bc.count).array();
      dx -= corr;
    }
    dx.array().colwise() *= bc.inv_std.array();
    scale_columns(dx, bc.mask[t]);
    din.steps.push_back(std::move(dx));
  }
  return din;
}

void BatchNormLayer::commit(const LayerCache& cache) {
  const auto& bc = dynamic_cast<const BatchNormCache&>(cache);
  if (!bc.batch_stats) return;
  running_mean_ = momentum_ * running_mean_ + (1.0 - momentum_) * bc.mean;
  running_var_ = momentum_ * running_var_ + (1.0 - momentum_) * bc.var;
}

void BatchNormLayer::save(BinaryWriter& w) const {
  w.f64(momentum_);
  w.f64(eps_);
  w.mat(gamma_);
  w.mat(beta_);
  w.vec(running_mean_);
  w.vec(running_var_);
}

// ---------------------------------------------------------------------------
// Dueling head

DuelingLayer::DuelingLayer(Eigen::Index input, Eigen::Index actions, Rng& rng)
    : wv_(glorot(1, input, rng)),
      bv_(Mat::Zero(1, 1)),
      wa_(glorot(actions, input, rng)),
      ba_(Mat::Zero(actions, 1)) {}

SeqBatch DuelingLayer::forward(const SeqBatch& in, const Pass& /*pass*/,
                               std::unique_ptr<LayerCache>* cache) const {
  check_input(in, wa_.cols(), "dueling layer");
  SeqBatch out;
  out.lengths = in.lengths;
  for (const auto& x : in.steps) {
    Mat v = wv_ * x;
    v.array() += bv_(0, 0);
    Mat a = wa_ * x;
    a.colwise() += ba_.col(0);
    const Eigen::RowVectorXd shift = v.row(0) - a.colwise().mean();
    a.rowwise() += shift;
    out.steps.push_back(std::move(a));
  }
  if (cache) {
    auto ic = std::make_unique<InputCache>();
    ic->x = in.steps;
    *cache = std::move(ic);
  }
  return out;
}

SeqBatch DuelingLayer::backward(const SeqBatch& dout, const LayerCache& cache,
                                std::vector<Mat>& grads) const {
  const auto& ic = dynamic_cast<const InputCache&>(cache);
  SeqBatch din;
  din.lengths = dout.lengths;
  for (std::size_t t = 0; t < ic.x.size(); ++t) {
    const Mat& dq = dout.steps[t];
    const Mat dv = dq.colwise().sum();
    Mat da = dq;
    da.rowwise() -= dq.colwise().mean();
    grads[0].noalias() += dv * ic.x[t].transpose();
    grads[1] += dv.rowwise().sum();
    grads[2].noalias() += da * ic.x[t].transpose();
    grads[3] += da.rowwise().sum();
    Mat dx = wv_.transpose() * dv;
    dx.noalias() += wa_.transpose() * da;
    din.steps.push_back(std::move(dx));
  }
  return din;
}

void DuelingLayer::save(BinaryWriter& w) const {
  w.mat(wv_);
  w.mat(bv_);
  w.mat(wa_);
  w.mat(ba_);
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const Network& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->out_size() != layer->in_size()) {
    throw std::invalid_argument("layer input size " + std::to_string(layer->in_size()) +
                                " does not match previous output size " +
                                std::to_string(layers_.back()->out_size()));
  }
  layers_.push_back(std::move(layer));
}

Eigen::Index Network::input_size() const { return layers_.empty() ? 0 : layers_.front()->in_size(); }
Eigen::Index Network::output_size() const { return layers_.empty() ? 0 : layers_.back()->out_size(); }

std::ptrdiff_t Network::reduce_index() const {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (layers_[i]->recurrent()) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

namespace {

// Keeps each sequence's last real step.
SeqBatch final_states(const SeqBatch& s, Eigen::Index features) {
  SeqBatch out;
  const auto b = s.batch();
  out.lengths.assign(static_cast<std::size_t>(b), 1);
  Mat last = Mat::Zero(features, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const int len = s.lengths[static_cast<std::size_t>(j)];
    if (len > 0) last.col(j) = s.steps[static_cast<std::size_t>(len - 1)].col(j);
  }
  out.steps.push_back(std::move(last));
  return out;
}

SeqBatch expand_final(const Mat& d, const std::vector<int>& lengths, std::size_t time) {
  SeqBatch out;
  out.lengths = lengths;
  out.steps.assign(time, Mat::Zero(d.rows(), d.cols()));
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const int len = lengths[static_cast<std::size_t>(j)];
    if (len > 0) out.steps[static_cast<std::size_t>(len - 1)].col(j) = d.col(j);
  }
  return out;
}

}  // namespace

SeqBatch Network::run(const SeqBatch& batch, const Pass& pass, Cache* cache) const {
  if (layers_.empty()) throw std::logic_error("network has no layers");
  const auto ridx = reduce_index();
  if (cache) {
    cache->layers.clear();
    cache->layers.resize(layers_.size());
  }
  auto reduce = [&](const SeqBatch& s, Eigen::Index features) {
    if (cache) {
      cache->lengths = s.lengths;
      cache->reduced_time = s.time();
    }
    return final_states(s, features);
  };

  SeqBatch cur = ridx < 0 ? reduce(batch, input_size()) : batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, pass, cache ? &cache->layers[i] : nullptr);
    if (static_cast<std::ptrdiff_t>(i) == ridx) cur = reduce(cur, layers_[i]->out_size());
  }
  if (cache) cache->valid = true;
  return cur;
}

Mat Network::infer(const SeqBatch& batch) const {
  Pass pass;
  pass.mode = Mode::kInfer;
  return run(batch, pass, nullptr).steps.front();
}

Vec Network::infer(const Mat& sequence) const {
  return infer(make_batch(sequence)).col(0);
}

Mat Network::forward_train(const SeqBatch& batch, Rng* rng, Cache& cache, bool dropout) const {
  Pass pass;
  pass.mode = Mode::kTrain;
  pass.dropout = dropout;
  pass.rng = rng;
  return run(batch, pass, &cache).steps.front();
}

Gradients Network::backward(const Cache& cache, const Mat& upstream) const {
  if (!cache.valid || cache.layers.size() != layers_.size()) {
    throw std::logic_error("backward called without a train-mode forward cache");
  }
  if (upstream.rows() != output_size()) {
    throw std::invalid_argument("upstream gradient has " + std::to_string(upstream.rows()) +
                                " rows, network outputs " + std::to_string(output_size()));
  }
  const auto ridx = reduce_index();
  std::vector<std::vector<Mat>> per_layer(layers_.size());
  SeqBatch d;
  d.lengths.assign(static_cast<std::size_t>(upstream.cols()), 1);
  d.steps.push_back(upstream);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (static_cast<std::ptrdiff_t>(i) == ridx) d = expand_final(d.steps.front(), cache.lengths, cache.reduced_time);
    per_layer[i] = zeros_like(layers_[i]->params());
    d = layers_[i]->backward(d, *cache.layers[i], per_layer[i]);
  }
  Gradients grads;
  for (auto& g : per_layer) {
    for (auto& m : g) grads.push_back(std::move(m));
  }
  return grads;
}

void Network::commit(const Cache& cache) {
  if (!cache.valid) return;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (cache.layers[i]) layers_[i]->commit(*cache.layers[i]);
  }
}

std::vector<Mat*> Network::params() {
  std::vector<Mat*> out;
  for (auto& l : layers_) {
    for (Mat* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Mat*> Network::params() const {
  std::vector<const Mat*> out;
  for (const auto& l : layers_) {
    for (Mat* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<std::string> Network::param_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (const auto& n : layers_[i]->param_names()) {
      out.push_back(std::to_string(i) + "." + type_name(layers_[i]->type()) + "." + n);
    }
  }
  return out;
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const Mat* p : params()) n += static_cast<std::size_t>(p->size());
  return n;
}

void Network::save(BinaryWriter& w) const {
  w.str("network");
  w.u64(layers_.size());
  for (const auto& l : layers_) {
    w.u64(static_cast<std::uint64_t>(l->type()));
    l->save(w);
  }
}

Network Network::load(BinaryReader& r) {
  r.expect("network");
  const auto n = r.u64();
  Network net;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto type = static_cast<LayerType>(r.u64());
    switch (type) {
      case LayerType::kGru: {
        GRULayerParams p;
        p.w_r = r.mat();
        p.w_z = r.mat();
        p.w_h = r.mat();
        p.u_r = r.mat();
        p.u_z = r.mat();
        p.u_h = r.mat();
        p.b_r = r.mat();
        p.b_z = r.mat();
        p.b_h = r.mat();
        net.add(std::make_unique<GruLayer>(std::move(p)));
        break;
      }
      case LayerType::kDense: {
        Mat w = r.mat();
        Mat b = r.mat();
        net.add(std::make_unique<DenseLayer>(std::move(w), std::move(b)));
        break;
      }
      case LayerType::kDropout: {
        const auto size = static_cast<Eigen::Index>(r.u64());
        const double rate = r.f64();
        net.add(std::make_unique<DropoutLayer>(size, rate));
        break;
      }
      case LayerType::kBatchNorm: {
        const double momentum = r.f64();
        const double eps = r.f64();
        Mat gamma = r.mat();
        Mat beta = r.mat();
        Vec mean = r.vec();
        Vec var = r.vec();
        auto bn = std::make_unique<BatchNormLayer>(gamma.rows(), momentum, eps);
        bn->gamma() = std::move(gamma);
        bn->beta() = std::move(beta);
        bn->set_running(std::move(mean), std::move(var));
        net.add(std::move(bn));
        break;
      }
      case LayerType::kDueling: {
        Mat wv = r.mat();
        Mat bv = r.mat();
        Mat wa = r.mat();
        Mat ba = r.mat();
        net.add(std::make_unique<DuelingLayer>(std::move(wv), std::move(bv), std::move(wa), std::move(ba)));
        break;
      }
      default:
        throw std::runtime_error("unknown layer type " + std::to_string(static_cast<std::uint64_t>(type)));
    }
  }
  return net;
}

Network build_network(const NetworkSpec& spec, Rng& rng) {
  Network net;
  net.add(std::make_unique<GruLayer>(spec.input, spec.hidden, rng));
  if (spec.batch_norm) net.add(std::make_unique<BatchNormLayer>(spec.hidden, spec.bn_momentum));
  net.add(std::make_unique<DropoutLayer>(spec.hidden, spec.dropout));
  net.add(std::make_unique<GruLayer>(spec.hidden, spec.hidden, rng));
  net.add(std::make_unique<DropoutLayer>(spec.hidden, spec.dropout));
  if (spec.dueling) {
    net.add(std::make_unique<DuelingLayer>(spec.hidden, spec.output, rng));
  } else {
    net.add(std::make_unique<DenseLayer>(spec.hidden, spec.output, rng));
  }
  return net;
}

std::size_t gru_dense_param_count(std::size_t input, std::size_t hidden, std::size_t output) {
  return 3 * (hidden * input + hidden * hidden + hidden) +
         3 * (hidden * hidden + hidden * hidden + hidden) + (hidden * output + output);
}

// ---------------------------------------------------------------------------
// Optimization

void adam_step(const std::vector<Mat*>& params, const Gradients& grads, AdamState& state,
               const std::vector<std::string>& names) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for parameter " +
                                  (i < names.size() ? names[i] : std::to_string(i)));
    }
    if (!grads[i].allFinite()) {
      throw std::domain_error("non-finite gradient for parameter " +
                              (i < names.size() ? names[i] : std::to_string(i)));
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const Mat* p : params) {
      state.m.push_back(Mat::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i].cwiseProduct(grads[i]);
    const auto m_hat = state.m[i].array() / corr1;
    const auto v_hat = state.v[i].array() / corr2;
    params[i]->array() -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
  }
}

void adam_step(Network& net, const Gradients& grads, AdamState& state) {
  adam_step(net.params(), grads, state, net.param_names());
}

double finite_diff_check(Network& net, const SeqBatch& batch, const Mat& target) {
  constexpr double kStep = 1e-5;
  auto loss = [&] {
    Network::Cache c;
    const Mat y = net.forward_train(batch, nullptr, c, /*dropout=*/false);
    return (y - target).squaredNorm();
  };
  Network::Cache cache;
  const Mat y = net.forward_train(batch, nullptr, cache, /*dropout=*/false);
  const Gradients grads = net.backward(cache, 2.0 * (y - target));

  double worst = 0.0;
  auto ps = net.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Mat& p = *ps[k];
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + kStep;
      const double up = loss();
      p.data()[i] = saved - kStep;
      const double down = loss();
      p.data()[i] = saved;
      const double fd = (up - down) / (2.0 * kStep);
      const double bp = grads[k].data()[i];
      const double err = std::abs(bp - fd) / std::max({1.0, std::abs(bp), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(Network& net, const Mat& sequence, const Vec& target) {
  return finite_diff_check(net, make_batch(sequence), Mat(target));
}

}  // namespace chatdqn::nn
