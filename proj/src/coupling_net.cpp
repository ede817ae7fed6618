#include "flowlab/coupling_net.hpp"

#include <cmath>
#include <cstring>

#include "flowlab/errors.hpp"

namespace flowlab {
namespace {

double truncated_normal(Rng& rng, double stddev) {
  // Resample outside two standard deviations.
  double v = rng.normal();
  while (std::fabs(v) > 2.0) v = rng.normal();
  return v * stddev;
}

}  // namespace

CouplingNet CouplingNet::dense(std::size_t in_dim, std::size_t hidden, std::size_t out_dim) {
  if (in_dim == 0 || hidden == 0 || out_dim == 0) throw InvalidConfig("coupling net dims must be positive");
  CouplingNet net;
  net.conv_ = false;
  net.in_dim_ = in_dim;
  net.hidden_ = hidden;
  net.out_dim_ = out_dim;
  net.w1_ = 0;
  net.b1_ = net.w1_ + hidden * in_dim;
  net.w2_ = net.b1_ + hidden;
  net.b2_ = net.w2_ + hidden * hidden;
  net.w3_ = net.b2_ + hidden;
  net.b3_ = net.w3_ + out_dim * hidden;
  net.params_.assign(net.b3_ + out_dim, 0.0);
  return net;
}

CouplingNet CouplingNet::conv(std::size_t height, std::size_t width, std::size_t in_ch,
                              std::size_t hidden_ch, std::size_t out_ch) {
  if (in_ch == 0 || hidden_ch == 0 || out_ch == 0) throw InvalidConfig("coupling net channels must be positive");
  CouplingNet net;
  net.conv_ = true;
  net.in_dim_ = in_ch;
  net.hidden_ = hidden_ch;
  net.out_dim_ = out_ch;
  net.height_ = height;
  net.width_ = width;
  net.w1_ = 0;
  net.b1_ = net.w1_ + hidden_ch * in_ch * 9;
  net.w2_ = net.b1_ + hidden_ch;
  net.b2_ = net.w2_ + hidden_ch * hidden_ch * 9;
  net.w3_ = net.b2_ + hidden_ch;
  net.b3_ = net.w3_ + out_ch * hidden_ch * 9;
  net.params_.assign(net.b3_ + out_ch, 0.0);
  return net;
}

void CouplingNet::init_params(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  const std::size_t fan1 = conv_ ? in_dim_ * 9 : in_dim_;
  const std::size_t fan2 = conv_ ? hidden_ * 9 : hidden_;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(fan1));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(fan2));
  for (std::size_t i = w1_; i < b1_; ++i) params_[i] = truncated_normal(rng, s1);
  for (std::size_t i = w2_; i < b2_; ++i) params_[i] = truncated_normal(rng, s2);
  // w3/b3 stay zero so the coupling starts as a no-op.
}

std::size_t CouplingNet::in_size() const { return conv_ ? height_ * width_ * in_dim_ : in_dim_; }
std::size_t CouplingNet::out_size() const { return conv_ ? height_ * width_ * out_dim_ : out_dim_; }

void CouplingNet::forward(const double* in, double* out, NetCache* cache) const {
  if (conv_)
    conv_forward(in, out, cache);
  else
    dense_forward(in, out, cache);
}

void CouplingNet::backward(const NetCache& cache, const double* dout, double* din_add, double* dparams) const {
  if (conv_)
    conv_backward(cache, dout, din_add, dparams);
  else
    dense_backward(cache, dout, din_add, dparams);
}

void CouplingNet::dense_forward(const double* in, double* out, NetCache* cache) const {
  const double* p = params_.data();
  std::vector<double> h1(hidden_), h2(hidden_);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double s = p[b1_ + h];
    const double* w = p + w1_ + h * in_dim_;
    for (std::size_t i = 0; i < in_dim_; ++i) s += w[i] * in[i];
    h1[h] = std::tanh(s);
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    double s = p[b2_ + h];
    const double* w = p + w2_ + h * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) s += w[i] * h1[i];
    h2[h] = std::tanh(s);
  }
  for (std::size_t o = 0; o < out_dim_; ++o) {
    double s = p[b3_ + o];
    const double* w = p + w3_ + o * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) s += w[i] * h2[i];
    out[o] = s;
  }
  if (cache) {
    cache->in.assign(in, in + in_dim_);
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
  }
}

void CouplingNet::dense_backward(const NetCache& cache, const double* dout, double* din_add,
                                 double* dparams) const {
  const double* p = params_.data();
  std::vector<double> dh2(hidden_, 0.0), dh1(hidden_, 0.0);
  for (std::size_t o = 0; o < out_dim_; ++o) {
    const double g = dout[o];
    dparams[b3_ + o] += g;
    const double* w = p + w3_ + o * hidden_;
    double* dw = dparams + w3_ + o * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) {
      dw[i] += g * cache.h2[i];
      dh2[i] += g * w[i];
    }
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    const double g = dh2[h] * (1.0 - cache.h2[h] * cache.h2[h]);
    dparams[b2_ + h] += g;
    const double* w = p + w2_ + h * hidden_;
    double* dw = dparams + w2_ + h * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) {
      dw[i] += g * cache.h1[i];
      dh1[i] += g * w[i];
    }
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    const double g = dh1[h] * (1.0 - cache.h1[h] * cache.h1[h]);
    dparams[b1_ + h] += g;
    const double* w = p + w1_ + h * in_dim_;
    double* dw = dparams + w1_ + h * in_dim_;
    for (std::size_t i = 0; i < in_dim_; ++i) {
      dw[i] += g * cache.in[i];
      din_add[i] += g * w[i];
    }
  }
}

// Conv layout: activations HWC per example, kernels [out_ch][in_ch][ky][kx],
// 3x3, stride 1, zero padding 1.
namespace {

inline std::size_t kidx(std::size_t oc, std::size_t ic, std::size_t in_ch, std::size_t ky, std::size_t kx) {
  return ((oc * in_ch + ic) * 3 + ky) * 3 + kx;
}

void conv3x3(const double* in, std::size_t h, std::size_t w, std::size_t cin, const double* kernel,
             const double* bias, std::size_t cout, double* out) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* o = out + (y * w + x) * cout;
      for (std::size_t oc = 0; oc < cout; ++oc) o[oc] = bias[oc];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::size_t yy = y + ky;
        if (yy < 1 || yy > h) continue;  // zero padding
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::size_t xx = x + kx;
          if (xx < 1 || xx > w) continue;
          const double* src = in + ((yy - 1) * w + (xx - 1)) * cin;
          for (std::size_t oc = 0; oc < cout; ++oc) {
            const double* k = kernel + kidx(oc, 0, cin, ky, kx);
            double s = 0.0;
            for (std::size_t ic = 0; ic < cin; ++ic) s += k[ic * 9] * src[ic];
            o[oc] += s;
          }
        }
      }
    }
  }
}

void conv3x3_backward(const double* in, std::size_t h, std::size_t w, std::size_t cin,
                      const double* kernel, std::size_t cout, const double* dout, double* din_add,
                      double* dkernel, double* dbias) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double* g = dout + (y * w + x) * cout;
      for (std::size_t oc = 0; oc < cout; ++oc) dbias[oc] += g[oc];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::size_t yy = y + ky;
        if (yy < 1 || yy > h) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::size_t xx = x + kx;
          if (xx < 1 || xx > w) continue;
          const double* src = in + ((yy - 1) * w + (xx - 1)) * cin;
          double* dsrc = din_add ? din_add + ((yy - 1) * w + (xx - 1)) * cin : nullptr;
          for (std::size_t oc = 0; oc < cout; ++oc) {
            const double go = g[oc];
            if (go == 0.0) continue;
            const double* k = kernel + kidx(oc, 0, cin, ky, kx);
            double* dk = dkernel + kidx(oc, 0, cin, ky, kx);
            for (std::size_t ic = 0; ic < cin; ++ic) {
              dk[ic * 9] += go * src[ic];
              if (dsrc) dsrc[ic] += go * k[ic * 9];
            }
          }
        }
      }
    }
  }
}

void tanh_inplace(double* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
}

}  // namespace

void CouplingNet::conv_forward(const double* in, double* out, NetCache* cache) const {
  const double* p = params_.data();
  const std::size_t pix = height_ * width_;
  std::vector<double> h1(pix * hidden_), h2(pix * hidden_);
  conv3x3(in, height_, width_, in_dim_, p + w1_, p + b1_, hidden_, h1.data());
  tanh_inplace(h1.data(), h1.size());
  conv3x3(h1.data(), height_, width_, hidden_, p + w2_, p + b2_, hidden_, h2.data());
  tanh_inplace(h2.data(), h2.size());
  conv3x3(h2.data(), height_, width_, hidden_, p + w3_, p + b3_, out_dim_, out);
  if (cache) {
    cache->in.assign(in, in + pix * in_dim_);
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
  }
}

void CouplingNet::conv_backward(const NetCache& cache, const double* dout, double* din_add,
                                double* dparams) const {
  const double* p = params_.data();
  const std::size_t pix = height_ * width_;
  std::vector<double> dh2(pix * hidden_, 0.0), dh1(pix * hidden_, 0.0);
  conv3x3_backward(cache.h2.data(), height_, width_, hidden_, p + w3_, out_dim_, dout, dh2.data(),
                   dparams + w3_, dparams + b3_);
  for (std::size_t i = 0; i < dh2.size(); ++i) dh2[i] *= 1.0 - cache.h2[i] * cache.h2[i];
  conv3x3_backward(cache.h1.data(), height_, width_, hidden_, p + w2_, hidden_, dh2.data(), dh1.data(),
                   dparams + w2_, dparams + b2_);
  for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] *= 1.0 - cache.h1[i] * cache.h1[i];
  conv3x3_backward(cache.in.data(), height_, width_, in_dim_, p + w1_, hidden_, dh1.data(), din_add,
                   dparams + w1_, dparams + b1_);
}

}  // namespace flowlab
