#include "flowlab/layers.hpp"

#include <cmath>
#include <cstring>

#include "flowlab/errors.hpp"

namespace flowlab {
namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

bool is_image(const Shape& s) { return s.size() == 3; }

void require_flat_or_image(const Shape& s, const char* what) {
  if (s.size() != 1 && s.size() != 3) {
    throw InvalidConfig(std::string(what) + " expects a flat {D} or image {H,W,C} shape, got " +
                        shape_to_string(s));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// CouplingLayer

CouplingLayer::CouplingLayer(Shape shape, const Options& opts)
    : FlowLayer(shape, shape), opts_(opts) {
  require_flat_or_image(shape, "coupling");
  const bool affine = opts_.kind == Kind::Affine;
  if (is_image(shape)) {
    const std::size_t h = shape[0], w = shape[1], c = shape[2];
    if (c < 2 || c % 2 != 0) {
      throw InvalidConfig("coupling needs an even channel count >= 2, got " + std::to_string(c));
    }
    split_ = c / 2;
    for (std::size_t p = 0; p < h * w; ++p) {
      for (std::size_t cc = 0; cc < split_; ++cc) idx_a_.push_back(p * c + cc);
      for (std::size_t cc = split_; cc < c; ++cc) idx_b_.push_back(p * c + cc);
    }
    net_ = CouplingNet::conv(h, w, c - split_, opts_.hidden, (affine ? 2 : 1) * split_);
  } else {
    const std::size_t d = shape[0];
    if (d < 2 || d % 2 != 0) {
      throw InvalidConfig("coupling needs an even dimension count >= 2, got " + std::to_string(d));
    }
    split_ = d / 2;
    for (std::size_t i = 0; i < split_; ++i) idx_a_.push_back(i);
    for (std::size_t i = split_; i < d; ++i) idx_b_.push_back(i);
    net_ = CouplingNet::dense(d - split_, opts_.hidden, (affine ? 2 : 1) * split_);
  }
}

const char* CouplingLayer::kind() const {
  if (opts_.kind == Kind::Additive) return "additive-coupling";
  return opts_.scale_param == ScaleParam::Exp ? "affine-coupling-exp" : "affine-coupling-sigmoid";
}

double CouplingLayer::effective_scale(double s_raw) const {
  if (opts_.scale_param == ScaleParam::Exp && opts_.clamp_scale) {
    return std::tanh(s_raw) * opts_.scale_clamp;
  }
  return s_raw;
}

double CouplingLayer::effective_scale_grad(double s_raw) const {
  if (opts_.scale_param == ScaleParam::Exp && opts_.clamp_scale) {
    const double t = std::tanh(s_raw);
    return (1.0 - t * t) * opts_.scale_clamp;
  }
  return 1.0;
}

namespace {

// Positions of the s and t outputs for transformed element k. Image nets
// emit per-pixel channel blocks [s | t]; dense nets emit [s... | t...].
struct StIndex {
  std::size_t split, out_ch;
  bool image_layout;
  std::size_t s(std::size_t k) const {
    return image_layout ? (k / split) * out_ch + (k % split) : k;
  }
  std::size_t t(std::size_t k, std::size_t total) const {
    return image_layout ? (k / split) * out_ch + split + (k % split) : total + k;
  }
};

}  // namespace

void CouplingLayer::fwd(const double* x, double* y, double* /*factored*/, double& logdet,
                        LayerCache* cache) const {
  const std::size_t d = in_size();
  std::vector<double> net_in(idx_b_.size());
  for (std::size_t i = 0; i < idx_b_.size(); ++i) net_in[i] = x[idx_b_[i]];
  std::vector<double> net_out(net_.out_size());
  net_.forward(net_in.data(), net_out.data(), cache ? &cache->net : nullptr);

  for (std::size_t i = 0; i < idx_b_.size(); ++i) y[idx_b_[i]] = x[idx_b_[i]];

  const std::size_t da = idx_a_.size();
  if (opts_.kind == Kind::Additive) {
    for (std::size_t k = 0; k < da; ++k) y[idx_a_[k]] = x[idx_a_[k]] + net_out[k];
  } else {
    const StIndex st{split_, 2 * split_, is_image(in_shape_)};
    for (std::size_t k = 0; k < da; ++k) {
      const double s_raw = net_out[st.s(k)];
      const double t = net_out[st.t(k, da)];
      double factor, log_factor;
      if (opts_.scale_param == ScaleParam::Exp) {
        log_factor = effective_scale(s_raw);
        factor = std::exp(log_factor);
      } else {
        factor = sigmoid(s_raw);
        log_factor = log_sigmoid(s_raw);
      }
      y[idx_a_[k]] = factor * x[idx_a_[k]] + t;
      logdet += log_factor;
    }
  }
  if (cache) {
    cache->x.assign(x, x + d);
    cache->aux = std::move(net_out);
  }
}

void CouplingLayer::inv(const double* y, const double* /*factored*/, double* x) const {
  std::vector<double> net_in(idx_b_.size());
  for (std::size_t i = 0; i < idx_b_.size(); ++i) {
    x[idx_b_[i]] = y[idx_b_[i]];
    net_in[i] = y[idx_b_[i]];
  }
  std::vector<double> net_out(net_.out_size());
  net_.forward(net_in.data(), net_out.data(), nullptr);

  const std::size_t da = idx_a_.size();
  if (opts_.kind == Kind::Additive) {
    for (std::size_t k = 0; k < da; ++k) x[idx_a_[k]] = y[idx_a_[k]] - net_out[k];
  } else {
    const StIndex st{split_, 2 * split_, is_image(in_shape_)};
    for (std::size_t k = 0; k < da; ++k) {
      const double s_raw = net_out[st.s(k)];
      const double t = net_out[st.t(k, da)];
      const double factor =
          opts_.scale_param == ScaleParam::Exp ? std::exp(effective_scale(s_raw)) : sigmoid(s_raw);
      x[idx_a_[k]] = (y[idx_a_[k]] - t) / factor;
    }
  }
}

void CouplingLayer::bwd(const LayerCache& cache, const double* dy, const double* /*dfactored*/,
                        double dlogdet, double* dx, double* dparams) const {
  const std::size_t da = idx_a_.size();
  std::vector<double> dnet_out(net_.out_size(), 0.0);

  if (opts_.kind == Kind::Additive) {
    for (std::size_t k = 0; k < da; ++k) {
      dx[idx_a_[k]] = dy[idx_a_[k]];
      dnet_out[k] = dy[idx_a_[k]];
    }
  } else {
    const StIndex st{split_, 2 * split_, is_image(in_shape_)};
    for (std::size_t k = 0; k < da; ++k) {
      const double s_raw = cache.aux[st.s(k)];
      const double dya = dy[idx_a_[k]];
      const double xa = cache.x[idx_a_[k]];
      double ds_raw;
      if (opts_.scale_param == ScaleParam::Exp) {
        const double factor = std::exp(effective_scale(s_raw));
        dx[idx_a_[k]] = dya * factor;
        ds_raw = (dya * factor * xa + dlogdet) * effective_scale_grad(s_raw);
      } else {
        const double sc = sigmoid(s_raw);
        dx[idx_a_[k]] = dya * sc;
        ds_raw = dya * sc * (1.0 - sc) * xa + dlogdet * (1.0 - sc);
      }
      dnet_out[st.s(k)] = ds_raw;
      dnet_out[st.t(k, da)] = dya;
    }
  }

  std::vector<double> dnet_in(net_.in_size(), 0.0);
  net_.backward(cache.net, dnet_out.data(), dnet_in.data(), dparams);
  for (std::size_t i = 0; i < idx_b_.size(); ++i) dx[idx_b_[i]] = dy[idx_b_[i]] + dnet_in[i];
}

// ---------------------------------------------------------------------------
// InvConv1x1

InvConv1x1::InvConv1x1(Shape shape) : FlowLayer(shape, shape) {
  require_flat_or_image(shape, "invconv");
  if (is_image(shape)) {
    pixels_ = shape[0] * shape[1];
    channels_ = shape[2];
  } else {
    pixels_ = 1;
    channels_ = shape[0];
  }
  if (channels_ == 0) throw InvalidConfig("invconv needs at least one channel");
  kernel_ = SquareMatrix::identity(channels_);
  refresh();
}

void InvConv1x1::init_params(Rng& rng) {
  kernel_ = SquareMatrix::random_rotation(channels_, rng);
  refresh();
}

void InvConv1x1::set_kernel(const SquareMatrix& k) {
  if (k.order() != channels_) throw ShapeMismatch("kernel order must match channel count");
  kernel_ = k;
  refresh();
}

void InvConv1x1::refresh() {
  logabsdet_ = lu_logabsdet(kernel_).log_abs;
  inverse_ = mat_inverse(kernel_);
  inverse_t_ = SquareMatrix(channels_);
  for (std::size_t i = 0; i < channels_; ++i)
    for (std::size_t j = 0; j < channels_; ++j) inverse_t_(i, j) = inverse_(j, i);
}

void InvConv1x1::fwd(const double* x, double* y, double* /*factored*/, double& logdet,
                     LayerCache* cache) const {
  for (std::size_t p = 0; p < pixels_; ++p) mat_vec(kernel_, x + p * channels_, y + p * channels_);
  logdet += static_cast<double>(pixels_) * logabsdet_;
  if (cache) cache->x.assign(x, x + in_size());
}

void InvConv1x1::inv(const double* y, const double* /*factored*/, double* x) const {
  for (std::size_t p = 0; p < pixels_; ++p) mat_vec(inverse_, y + p * channels_, x + p * channels_);
}

void InvConv1x1::bwd(const LayerCache& cache, const double* dy, const double* /*dfactored*/,
                     double dlogdet, double* dx, double* dparams) const {
  for (std::size_t p = 0; p < pixels_; ++p) {
    mat_tvec(kernel_, dy + p * channels_, dx + p * channels_);
    const double* xin = cache.x.data() + p * channels_;
    const double* g = dy + p * channels_;
    for (std::size_t i = 0; i < channels_; ++i)
      for (std::size_t j = 0; j < channels_; ++j) dparams[i * channels_ + j] += g[i] * xin[j];
  }
  // d(pixels * log|det U|)/dU = pixels * U^-T
  const double f = dlogdet * static_cast<double>(pixels_);
  if (f != 0.0) {
    for (std::size_t i = 0; i < channels_; ++i)
      for (std::size_t j = 0; j < channels_; ++j) dparams[i * channels_ + j] += f * inverse_t_(i, j);
  }
}

// ---------------------------------------------------------------------------
// PermutationLayer

PermutationLayer::PermutationLayer(Shape in_shape, Shape out_shape, std::vector<std::size_t> perm,
                                   std::string kind)
    : FlowLayer(std::move(in_shape), std::move(out_shape)), perm_(std::move(perm)), kind_(std::move(kind)) {
  if (perm_.size() != in_size() || in_size() != out_size()) {
    throw InvalidConfig("permutation must cover the layer size");
  }
}

std::unique_ptr<PermutationLayer> PermutationLayer::swap_halves(Shape shape) {
  require_flat_or_image(shape, "permutation");
  std::vector<std::size_t> perm(shape_numel(shape));
  if (is_image(shape)) {
    const std::size_t c = shape[2];
    if (c % 2 != 0) throw InvalidConfig("swap-halves permutation needs an even channel count");
    const std::size_t half = c / 2;
    for (std::size_t p = 0; p < shape[0] * shape[1]; ++p)
      for (std::size_t cc = 0; cc < c; ++cc) perm[p * c + cc] = p * c + (cc + half) % c;
  } else {
    const std::size_t d = shape[0];
    if (d % 2 != 0) throw InvalidConfig("swap-halves permutation needs an even dimension count");
    const std::size_t half = d / 2;
    for (std::size_t i = 0; i < d; ++i) perm[i] = (i + half) % d;
  }
  return std::make_unique<PermutationLayer>(shape, shape, std::move(perm), "permutation");
}

std::unique_ptr<PermutationLayer> PermutationLayer::squeeze(Shape shape) {
  if (shape.size() != 3) throw InvalidConfig("squeeze expects an image {H,W,C} shape");
  const std::size_t h = shape[0], w = shape[1], c = shape[2];
  if (h % 2 != 0 || w % 2 != 0) throw InvalidConfig("squeeze needs even spatial extents");
  const Shape out{h / 2, w / 2, 4 * c};
  std::vector<std::size_t> perm(h * w * c);
  const std::size_t w2 = w / 2, c4 = 4 * c;
  // out[i, j, (di*2+dj)*C + cc] = in[2i+di, 2j+dj, cc]
  for (std::size_t i = 0; i < h / 2; ++i)
    for (std::size_t j = 0; j < w2; ++j)
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj)
          for (std::size_t cc = 0; cc < c; ++cc) {
            const std::size_t out_idx = (i * w2 + j) * c4 + (di * 2 + dj) * c + cc;
            const std::size_t in_idx = ((2 * i + di) * w + (2 * j + dj)) * c + cc;
            perm[out_idx] = in_idx;
          }
  return std::make_unique<PermutationLayer>(shape, out, std::move(perm), "squeeze");
}

void PermutationLayer::fwd(const double* x, double* y, double* /*factored*/, double& /*logdet*/,
                           LayerCache* /*cache*/) const {
  for (std::size_t i = 0; i < perm_.size(); ++i) y[i] = x[perm_[i]];
}

void PermutationLayer::inv(const double* y, const double* /*factored*/, double* x) const {
  for (std::size_t i = 0; i < perm_.size(); ++i) x[perm_[i]] = y[i];
}

void PermutationLayer::bwd(const LayerCache& /*cache*/, const double* dy, const double* /*dfactored*/,
                           double /*dlogdet*/, double* dx, double* /*dparams*/) const {
  for (std::size_t i = 0; i < perm_.size(); ++i) dx[perm_[i]] = dy[i];
}

// ---------------------------------------------------------------------------
// FactorOutLayer

FactorOutLayer::FactorOutLayer(Shape shape) : FlowLayer(shape, shape) {
  require_flat_or_image(shape, "factor-out");
  if (is_image(shape)) {
    const std::size_t c = shape[2];
    if (c < 2 || c % 2 != 0) throw InvalidConfig("factor-out needs an even channel count >= 2");
    const std::size_t keep = c / 2;
    for (std::size_t p = 0; p < shape[0] * shape[1]; ++p) {
      for (std::size_t cc = 0; cc < keep; ++cc) idx_keep_.push_back(p * c + cc);
      for (std::size_t cc = keep; cc < c; ++cc) idx_factor_.push_back(p * c + cc);
    }
    out_shape_ = {shape[0], shape[1], keep};
    factored_shape_ = {shape[0], shape[1], c - keep};
  } else {
    const std::size_t d = shape[0];
    if (d < 2 || d % 2 != 0) throw InvalidConfig("factor-out needs an even dimension count >= 2");
    const std::size_t keep = d / 2;
    for (std::size_t i = 0; i < keep; ++i) idx_keep_.push_back(i);
    for (std::size_t i = keep; i < d; ++i) idx_factor_.push_back(i);
    out_shape_ = {keep};
    factored_shape_ = {d - keep};
  }
}

void FactorOutLayer::fwd(const double* x, double* y, double* factored, double& /*logdet*/,
                         LayerCache* /*cache*/) const {
  for (std::size_t i = 0; i < idx_keep_.size(); ++i) y[i] = x[idx_keep_[i]];
  for (std::size_t i = 0; i < idx_factor_.size(); ++i) factored[i] = x[idx_factor_[i]];
}

void FactorOutLayer::inv(const double* y, const double* factored, double* x) const {
  for (std::size_t i = 0; i < idx_keep_.size(); ++i) x[idx_keep_[i]] = y[i];
  for (std::size_t i = 0; i < idx_factor_.size(); ++i) x[idx_factor_[i]] = factored[i];
}

void FactorOutLayer::bwd(const LayerCache& /*cache*/, const double* dy, const double* dfactored,
                         double /*dlogdet*/, double* dx, double* /*dparams*/) const {
  for (std::size_t i = 0; i < idx_keep_.size(); ++i) dx[idx_keep_[i]] = dy[i];
  for (std::size_t i = 0; i < idx_factor_.size(); ++i) dx[idx_factor_[i]] = dfactored[i];
}

// ---------------------------------------------------------------------------
// batched wrappers

LayerForwardResult layer_forward(const FlowLayer& layer, const Tensor& x) {
  if (x.example_shape() != layer.in_shape()) {
    throw ShapeMismatch("layer_forward: input " + shape_to_string(x.example_shape()) +
                        " does not match layer " + shape_to_string(layer.in_shape()));
  }
  const std::size_t n = x.batch();
  LayerForwardResult result;
  Shape out_shape = layer.out_shape();
  out_shape.insert(out_shape.begin(), n);
  result.y = Tensor(out_shape);
  result.logdet.assign(n, 0.0);
  const std::size_t fs = layer.factored_size();
  if (fs > 0) {
    Shape f_shape = static_cast<const FactorOutLayer&>(layer).factored_shape();
    f_shape.insert(f_shape.begin(), n);
    result.factored = Tensor(f_shape);
  }
  for (std::size_t i = 0; i < n; ++i) {
    layer.fwd(x.example(i).data(), result.y.example(i).data(),
              fs > 0 ? result.factored.example(i).data() : nullptr, result.logdet[i], nullptr);
  }
  return result;
}

Tensor layer_inverse(const FlowLayer& layer, const Tensor& y, const Tensor* factored) {
  if (y.example_shape() != layer.out_shape()) {
    throw ShapeMismatch("layer_inverse: input " + shape_to_string(y.example_shape()) +
                        " does not match layer output " + shape_to_string(layer.out_shape()));
  }
  if (layer.factored_size() > 0 && factored == nullptr) {
    throw ShapeMismatch("layer_inverse: factor-out layer needs its factored tensor");
  }
  const std::size_t n = y.batch();
  Shape in_shape = layer.in_shape();
  in_shape.insert(in_shape.begin(), n);
  Tensor x(in_shape);
  for (std::size_t i = 0; i < n; ++i) {
    layer.inv(y.example(i).data(), factored ? factored->example(i).data() : nullptr,
              x.example(i).data());
  }
  return x;
}

}  // namespace flowlab
