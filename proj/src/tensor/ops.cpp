// SPDX-License-Identifier: Apache-2.0
#include "mfn/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "mfn/common/errors.hpp"

namespace mfn::tensor {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

using ImplList = std::initializer_list<const void*>;

template <typename T>
void check_finite(const char* op, const std::vector<T>& values) {
    if (!finite_checks()) return;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError(std::string("non-finite value produced by ") + op + " at element " +
                               std::to_string(i));
        }
    }
}

/// Wraps computed values into a tensor and, when any input needs gradients,
/// attaches a graph node carrying `grad_fn`.
template <typename T, typename GradFn>
BasicTensor<T> make_output(const char* op, Shape shape, std::vector<T> values,
                           std::initializer_list<BasicTensor<T>> inputs, GradFn&& grad_fn) {
    check_finite(op, values);
    auto out = BasicTensor<T>::from_values(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad = needs_grad || (in.defined() && in.requires_grad());
    if (!needs_grad) return out;

    auto node = std::make_shared<GradNode<T>>();
    node->op = op;
    for (const auto& in : inputs) {
        if (in.defined()) node->inputs.push_back(in.impl());
    }
    node->backward = std::forward<GradFn>(grad_fn);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
    return out;
}

template <typename T>
bool wants_grad(const std::shared_ptr<TensorImpl<T>>& impl) {
    return impl && impl->requires_grad;
}

void require(bool condition, const std::string& message) {
    if (!condition) throw ConfigError(message);
}

struct ConvGeometry {
    std::int64_t batch, in_c, out_c;
    std::int64_t d, h, w;
    std::int64_t kd, kh, kw;
    int sd, sh, sw;
    int pd, ph, pw;
    std::int64_t od, oh, ow;

    std::int64_t in_spatial() const { return d * h * w; }
    std::int64_t out_spatial() const { return od * oh * ow; }
    std::int64_t patch() const { return in_c * kd * kh * kw; }
    bool pointwise() const {
        return kd == 1 && kh == 1 && kw == 1 && sd == 1 && sh == 1 && sw == 1 && pd == 0 && ph == 0 &&
               pw == 0;
    }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
    const std::int64_t plane = g.oh * g.ow;
    const std::int64_t span = g.od * plane;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < g.in_c; ++c) {
        const T* xc = x + c * g.in_spatial();
        for (std::int64_t kz = 0; kz < g.kd; ++kz) {
            for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                for (std::int64_t kx = 0; kx < g.kw; ++kx, ++row) {
                    T* dst = col + row * span;
                    for (std::int64_t oz = 0; oz < g.od; ++oz) {
                        const std::int64_t iz = oz * g.sd - g.pd + kz;
                        T* dz = dst + oz * plane;
                        if (iz < 0 || iz >= g.d) {
                            std::fill(dz, dz + plane, T(0));
                            continue;
                        }
                        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                            const std::int64_t iy = oy * g.sh - g.ph + ky;
                            T* dy = dz + oy * g.ow;
                            if (iy < 0 || iy >= g.h) {
                                std::fill(dy, dy + g.ow, T(0));
                                continue;
                            }
                            const T* src = xc + (iz * g.h + iy) * g.w;
                            for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                                const std::int64_t ix = ox * g.sw - g.pw + kx;
                                dy[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
    const std::int64_t plane = g.oh * g.ow;
    const std::int64_t span = g.od * plane;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < g.in_c; ++c) {
        T* xc = dx + c * g.in_spatial();
        for (std::int64_t kz = 0; kz < g.kd; ++kz) {
            for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                for (std::int64_t kx = 0; kx < g.kw; ++kx, ++row) {
                    const T* src = col + row * span;
                    for (std::int64_t oz = 0; oz < g.od; ++oz) {
                        const std::int64_t iz = oz * g.sd - g.pd + kz;
                        if (iz < 0 || iz >= g.d) continue;
                        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                            const std::int64_t iy = oy * g.sh - g.ph + ky;
                            if (iy < 0 || iy >= g.h) continue;
                            T* dst = xc + (iz * g.h + iy) * g.w;
                            const T* s = src + oz * plane + oy * g.ow;
                            for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                                const std::int64_t ix = ox * g.sw - g.pw + kx;
                                if (ix >= 0 && ix < g.w) dst[ix] += s[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& x, const ConvParams<T>& p) {
    require(x.defined() && x.rank() == 5, "conv3d expects a 5-axis input, got " +
                                              (x.defined() ? to_string(x.shape()) : std::string("<none>")));
    require(p.kernel.defined() && p.kernel.rank() == 5, "conv3d kernel must be 5-axis");
    const auto& ks = p.kernel.shape();
    require(ks[1] == x.dim(1), "conv3d: input has " + std::to_string(x.dim(1)) +
                                   " channels, kernel expects " + std::to_string(ks[1]));
    for (int a = 0; a < 3; ++a) {
        require(ks[2 + a] > 0, "conv3d kernel extents must be positive");
        require(p.stride[a] >= 1, "conv3d stride must be >= 1");
        require(p.padding[a] >= 0, "conv3d padding must be >= 0");
        require(x.dim(2 + a) + 2 * p.padding[a] >= ks[2 + a],
                "conv3d: padded input " + to_string(x.shape()) + " smaller than kernel " +
                    to_string(ks));
    }
    if (p.bias) {
        require(p.bias->numel() == ks[0], "conv3d bias length must equal output channels");
    }
    ConvGeometry g{};
    g.batch = x.dim(0);
    g.in_c = x.dim(1);
    g.out_c = ks[0];
    g.d = x.dim(2);
    g.h = x.dim(3);
    g.w = x.dim(4);
    g.kd = ks[2];
    g.kh = ks[3];
    g.kw = ks[4];
    g.sd = p.stride[0];
    g.sh = p.stride[1];
    g.sw = p.stride[2];
    g.pd = p.padding[0];
    g.ph = p.padding[1];
    g.pw = p.padding[2];
    g.od = (g.d + 2 * g.pd - g.kd) / g.sd + 1;
    g.oh = (g.h + 2 * g.ph - g.kh) / g.sh + 1;
    g.ow = (g.w + 2 * g.pw - g.kw) / g.sw + 1;
    return g;
}

struct Broadcast {
    bool active = false;
    std::int64_t channels = 1;
    std::int64_t inner = 1;

    std::int64_t b_index(std::int64_t i) const {
        if (!active) return i;
        const std::int64_t outer = i / (channels * inner);
        return outer * inner + i % inner;
    }
};

template <typename T>
Broadcast check_binary(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require(a.defined() && b.defined(), std::string(op) + ": missing operand");
    if (a.shape() == b.shape()) return {};
    bool ok = a.rank() == b.rank() && a.rank() >= 2 && b.dim(1) == 1;
    for (std::size_t i = 0; ok && i < a.rank(); ++i) {
        if (i != 1 && a.dim(i) != b.dim(i)) ok = false;
    }
    require(ok, std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                    to_string(b.shape()));
    Broadcast bc;
    bc.active = true;
    bc.channels = a.dim(1);
    for (std::size_t i = 2; i < a.rank(); ++i) bc.inner *= a.dim(i);
    return bc;
}

enum class BinaryKind { add, sub, mul };

template <typename T>
BasicTensor<T> binary(BinaryKind kind, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const char* op = kind == BinaryKind::add ? "add" : kind == BinaryKind::sub ? "sub" : "mul";
    const Broadcast bc = check_binary(op, a, b);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const T rhs = bv[static_cast<std::size_t>(bc.b_index(static_cast<std::int64_t>(i)))];
        switch (kind) {
            case BinaryKind::add: out[i] = av[i] + rhs; break;
            case BinaryKind::sub: out[i] = av[i] - rhs; break;
            case BinaryKind::mul: out[i] = av[i] * rhs; break;
        }
    }
    auto ai = a.impl();
    auto bi = b.impl();
    return make_output<T>(op, a.shape(), std::move(out), {a, b},
                          [kind, bc, ai, bi](std::span<const T> g) {
                              const bool ga = wants_grad(ai);
                              const bool gb = wants_grad(bi);
                              T* da = ga ? ai->grad_buffer().data() : nullptr;
                              T* db = gb ? bi->grad_buffer().data() : nullptr;
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const auto j = static_cast<std::size_t>(
                                      bc.b_index(static_cast<std::int64_t>(i)));
                                  switch (kind) {
                                      case BinaryKind::add:
                                          if (ga) da[i] += g[i];
                                          if (gb) db[j] += g[i];
                                          break;
                                      case BinaryKind::sub:
                                          if (ga) da[i] += g[i];
                                          if (gb) db[j] -= g[i];
                                          break;
                                      case BinaryKind::mul:
                                          if (ga) da[i] += g[i] * bi->values[j];
                                          if (gb) db[j] += g[i] * ai->values[i];
                                          break;
                                  }
                              }
                          });
}

enum class UnaryKind { relu, sigmoid, tanh };

template <typename T>
BasicTensor<T> unary(UnaryKind kind, const BasicTensor<T>& x) {
    require(x.defined(), "unary op: missing operand");
    const char* op = kind == UnaryKind::relu ? "relu" : kind == UnaryKind::sigmoid ? "sigmoid" : "tanh";
    const auto xv = x.values();
    auto out = std::make_shared<std::vector<T>>(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        switch (kind) {
            case UnaryKind::relu: (*out)[i] = xv[i] > T(0) ? xv[i] : T(0); break;
            case UnaryKind::sigmoid: (*out)[i] = T(1) / (T(1) + std::exp(-xv[i])); break;
            case UnaryKind::tanh: (*out)[i] = std::tanh(xv[i]); break;
        }
    }
    auto xi = x.impl();
    std::vector<T> values = *out;
    return make_output<T>(op, x.shape(), std::move(values), {x},
                          [kind, xi, out](std::span<const T> g) {
                              auto& dx = xi->grad_buffer();
                              const auto& y = *out;
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  switch (kind) {
                                      case UnaryKind::relu:
                                          if (xi->values[i] > T(0)) dx[i] += g[i];
                                          break;
                                      case UnaryKind::sigmoid: dx[i] += g[i] * y[i] * (T(1) - y[i]); break;
                                      case UnaryKind::tanh: dx[i] += g[i] * (T(1) - y[i] * y[i]); break;
                                  }
                              }
                          });
}

} // namespace

template <typename T>
BatchNormState<T> BatchNormState<T>::make(std::int64_t channels, T momentum, T eps) {
    require(channels >= 1, "batch norm needs at least one channel");
    require(momentum > T(0) && momentum < T(1), "batch norm momentum must lie in (0, 1)");
    require(eps > T(0), "batch norm eps must be positive");
    BatchNormState s;
    s.gamma = BasicTensor<T>::full({channels}, T(1), true);
    s.beta = BasicTensor<T>::zeros({channels}, true);
    s.running_mean.assign(static_cast<std::size_t>(channels), T(0));
    s.running_var.assign(static_cast<std::size_t>(channels), T(1));
    s.momentum = momentum;
    s.eps = eps;
    return s;
}

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const ConvParams<T>& p) {
    const ConvGeometry g = conv_geometry(x, p);
    const std::int64_t K = g.patch();
    const std::int64_t P = g.out_spatial();
    std::vector<T> out(static_cast<std::size_t>(g.batch * g.out_c * P));
    std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(K * P));

    ConstMapMat<T> weight(p.kernel.values().data(), g.out_c, K);
    for (std::int64_t b = 0; b < g.batch; ++b) {
        const T* xb = x.values().data() + b * g.in_c * g.in_spatial();
        const T* colp = xb;
        if (!g.pointwise()) {
            im2col(xb, g, col.data());
            colp = col.data();
        }
        MapMat<T> ob(out.data() + b * g.out_c * P, g.out_c, P);
        ob.noalias() = weight * ConstMapMat<T>(colp, K, P);
        if (p.bias) {
            const auto bias = p.bias->values();
            for (std::int64_t c = 0; c < g.out_c; ++c) ob.row(c).array() += bias[static_cast<std::size_t>(c)];
        }
    }

    auto xi = x.impl();
    auto ki = p.kernel.impl();
    auto bi = p.bias ? p.bias->impl() : nullptr;
    Shape shape{g.batch, g.out_c, g.od, g.oh, g.ow};
    BasicTensor<T> bias_handle = p.bias ? *p.bias : BasicTensor<T>{};
    return make_output<T>("conv3d", std::move(shape), std::move(out), {x, p.kernel, bias_handle},
                          [g, xi, ki, bi](std::span<const T> grad) {
                              const std::int64_t K = g.patch();
                              const std::int64_t P = g.out_spatial();
                              const bool gx = wants_grad(xi);
                              const bool gk = wants_grad(ki);
                              const bool gb = wants_grad(bi);
                              std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(K * P));
                              std::vector<T> dcol(g.pointwise() ? 0 : static_cast<std::size_t>(K * P));
                              ConstMapMat<T> weight(ki->values.data(), g.out_c, K);
                              for (std::int64_t b = 0; b < g.batch; ++b) {
                                  ConstMapMat<T> gb_mat(grad.data() + b * g.out_c * P, g.out_c, P);
                                  const T* xb = xi->values.data() + b * g.in_c * g.in_spatial();
                                  if (gk) {
                                      const T* colp = xb;
                                      if (!g.pointwise()) {
                                          im2col(xb, g, col.data());
                                          colp = col.data();
                                      }
                                      MapMat<T> dw(ki->grad_buffer().data(), g.out_c, K);
                                      dw.noalias() += gb_mat * ConstMapMat<T>(colp, K, P).transpose();
                                  }
                                  if (gb) {
                                      auto& db = bi->grad_buffer();
                                      for (std::int64_t c = 0; c < g.out_c; ++c) {
                                          db[static_cast<std::size_t>(c)] += gb_mat.row(c).sum();
                                      }
                                  }
                                  if (gx) {
                                      T* dxb = xi->grad_buffer().data() + b * g.in_c * g.in_spatial();
                                      if (g.pointwise()) {
                                          MapMat<T>(dxb, K, P).noalias() += weight.transpose() * gb_mat;
                                      } else {
                                          MapMat<T>(dcol.data(), K, P).noalias() = weight.transpose() * gb_mat;
                                          col2im_add(dcol.data(), g, dxb);
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> batchnorm3d(const BasicTensor<T>& x, BatchNormState<T>& s) {
    require(x.defined() && x.rank() >= 2, "batchnorm3d expects a (B, C, ...) input");
    const std::int64_t C = x.dim(1);
    require(s.channels() == C, "batchnorm3d: input has " + std::to_string(C) + " channels, state has " +
                                   std::to_string(s.channels()));
    const std::int64_t B = x.dim(0);
    std::int64_t S = 1;
    for (std::size_t i = 2; i < x.rank(); ++i) S *= x.dim(i);
    const std::int64_t M = B * S;
    require(M >= 1, "batchnorm3d on empty input");

    const auto xv = x.values();
    const auto gamma = s.gamma.values();
    const auto beta = s.beta.values();
    auto xhat = std::make_shared<std::vector<T>>(xv.size());
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
    std::vector<T> out(xv.size());
    const bool training = s.mode == Mode::training;

    auto at = [S, C](std::int64_t b, std::int64_t c) { return static_cast<std::size_t>((b * C + c) * S); };
    for (std::int64_t c = 0; c < C; ++c) {
        double mean = 0.0;
        double var = 0.0;
        if (training) {
            for (std::int64_t b = 0; b < B; ++b) {
                const T* p = xv.data() + at(b, c);
                for (std::int64_t i = 0; i < S; ++i) mean += p[i];
            }
            mean /= static_cast<double>(M);
            for (std::int64_t b = 0; b < B; ++b) {
                const T* p = xv.data() + at(b, c);
                for (std::int64_t i = 0; i < S; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(M);
            const double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1) : var;
            const auto cu = static_cast<std::size_t>(c);
            s.running_mean[cu] = static_cast<T>((1.0 - s.momentum) * s.running_mean[cu] + s.momentum * mean);
            s.running_var[cu] = static_cast<T>((1.0 - s.momentum) * s.running_var[cu] + s.momentum * unbiased);
        } else {
            mean = s.running_mean[static_cast<std::size_t>(c)];
            var = s.running_var[static_cast<std::size_t>(c)];
        }
        const T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(s.eps)));
        const T m = static_cast<T>(mean);
        (*inv_std)[static_cast<std::size_t>(c)] = istd;
        const T gm = gamma[static_cast<std::size_t>(c)];
        const T bt = beta[static_cast<std::size_t>(c)];
        for (std::int64_t b = 0; b < B; ++b) {
            const std::size_t base = at(b, c);
            for (std::int64_t i = 0; i < S; ++i) {
                const std::size_t k = base + static_cast<std::size_t>(i);
                const T xh = (xv[k] - m) * istd;
                (*xhat)[k] = xh;
                out[k] = gm * xh + bt;
            }
        }
    }

    auto xi = x.impl();
    auto gi = s.gamma.impl();
    auto bi = s.beta.impl();
    return make_output<T>("batchnorm3d", x.shape(), std::move(out), {x, s.gamma, s.beta},
                          [=](std::span<const T> g) {
                              const auto& xh = *xhat;
                              for (std::int64_t c = 0; c < C; ++c) {
                                  double sum_g = 0.0;
                                  double sum_gx = 0.0;
                                  for (std::int64_t b = 0; b < B; ++b) {
                                      const std::size_t base = at(b, c);
                                      for (std::int64_t i = 0; i < S; ++i) {
                                          const std::size_t k = base + static_cast<std::size_t>(i);
                                          sum_g += g[k];
                                          sum_gx += static_cast<double>(g[k]) * xh[k];
                                      }
                                  }
                                  const auto cu = static_cast<std::size_t>(c);
                                  if (wants_grad(gi)) gi->grad_buffer()[cu] += static_cast<T>(sum_gx);
                                  if (wants_grad(bi)) bi->grad_buffer()[cu] += static_cast<T>(sum_g);
                                  if (!wants_grad(xi)) continue;
                                  auto& dx = xi->grad_buffer();
                                  const T gm = gi->values[cu];
                                  const T istd = (*inv_std)[cu];
                                  if (training) {
                                      const T mean_g = static_cast<T>(sum_g / static_cast<double>(M));
                                      const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(M));
                                      for (std::int64_t b = 0; b < B; ++b) {
                                          const std::size_t base = at(b, c);
                                          for (std::int64_t i = 0; i < S; ++i) {
                                              const std::size_t k = base + static_cast<std::size_t>(i);
                                              dx[k] += gm * istd * (g[k] - mean_g - xh[k] * mean_gx);
                                          }
                                      }
                                  } else {
                                      for (std::int64_t b = 0; b < B; ++b) {
                                          const std::size_t base = at(b, c);
                                          for (std::int64_t i = 0; i < S; ++i) {
                                              const std::size_t k = base + static_cast<std::size_t>(i);
                                              dx[k] += gm * istd * g[k];
                                          }
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(BinaryKind::add, a, b);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(BinaryKind::sub, a, b);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(BinaryKind::mul, a, b);
}
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    return unary(UnaryKind::relu, x);
}
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return unary(UnaryKind::sigmoid, x);
}
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
    return unary(UnaryKind::tanh, x);
}

template <typename T>
BasicTensor<T> pointwise(PointwiseKind kind, const BasicTensor<T>& a, const BasicTensor<T>* b) {
    auto need_b = [&]() -> const BasicTensor<T>& {
        require(b != nullptr, "binary pointwise op needs a second operand");
        return *b;
    };
    switch (kind) {
        case PointwiseKind::add: return add(a, need_b());
        case PointwiseKind::sub: return sub(a, need_b());
        case PointwiseKind::mul: return mul(a, need_b());
        case PointwiseKind::relu: return relu(a);
        case PointwiseKind::sigmoid: return sigmoid(a);
        case PointwiseKind::tanh: return tanh(a);
    }
    throw ConfigError("unknown pointwise kind");
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
    require(x.defined() && x.rank() >= 3, "global_avg_pool expects (B, C, spatial...)");
    const std::int64_t B = x.dim(0);
    const std::int64_t C = x.dim(1);
    std::int64_t S = 1;
    for (std::size_t i = 2; i < x.rank(); ++i) S *= x.dim(i);
    require(S >= 1, "global_avg_pool over empty spatial extent");
    const auto xv = x.values();
    std::vector<T> out(static_cast<std::size_t>(B * C));
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        double acc = 0.0;
        const T* p = xv.data() + bc * S;
        for (std::int64_t i = 0; i < S; ++i) acc += p[i];
        out[static_cast<std::size_t>(bc)] = static_cast<T>(acc / static_cast<double>(S));
    }
    auto xi = x.impl();
    return make_output<T>("global_avg_pool", Shape{B, C}, std::move(out), {x},
                          [xi, S](std::span<const T> g) {
                              auto& dx = xi->grad_buffer();
                              const T scale = T(1) / static_cast<T>(S);
                              for (std::size_t bc = 0; bc < g.size(); ++bc) {
                                  const T v = g[bc] * scale;
                                  T* p = dx.data() + bc * static_cast<std::size_t>(S);
                                  for (std::int64_t i = 0; i < S; ++i) p[i] += v;
                              }
                          });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    require(x.defined() && x.rank() == 2, "linear expects a (B, F) input");
    require(weight.defined() && weight.rank() == 2 && weight.dim(1) == x.dim(1),
            "linear: weight " + (weight.defined() ? to_string(weight.shape()) : std::string("<none>")) +
                " incompatible with input " + to_string(x.shape()));
    require(bias.defined() && bias.numel() == weight.dim(0), "linear: bias length must equal outputs");
    const std::int64_t B = x.dim(0);
    const std::int64_t F = x.dim(1);
    const std::int64_t O = weight.dim(0);
    std::vector<T> out(static_cast<std::size_t>(B * O));
    MapMat<T> om(out.data(), B, O);
    ConstMapMat<T> xm(x.values().data(), B, F);
    ConstMapMat<T> wm(weight.values().data(), O, F);
    om.noalias() = xm * wm.transpose();
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t o = 0; o < O; ++o) om(b, o) += bias.values()[static_cast<std::size_t>(o)];
    }
    auto xi = x.impl();
    auto wi = weight.impl();
    auto bi = bias.impl();
    return make_output<T>("linear", Shape{B, O}, std::move(out), {x, weight, bias},
                          [xi, wi, bi, B, F, O](std::span<const T> g) {
                              ConstMapMat<T> gm(g.data(), B, O);
                              if (wants_grad(xi)) {
                                  MapMat<T>(xi->grad_buffer().data(), B, F).noalias() +=
                                      gm * ConstMapMat<T>(wi->values.data(), O, F);
                              }
                              if (wants_grad(wi)) {
                                  MapMat<T>(wi->grad_buffer().data(), O, F).noalias() +=
                                      gm.transpose() * ConstMapMat<T>(xi->values.data(), B, F);
                              }
                              if (wants_grad(bi)) {
                                  auto& db = bi->grad_buffer();
                                  for (std::int64_t o = 0; o < O; ++o) {
                                      db[static_cast<std::size_t>(o)] += gm.col(o).sum();
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require(a.defined() && b.defined() && a.rank() >= 2 && a.rank() == b.rank(),
            "concat_channels expects operands of equal rank >= 2");
    for (std::size_t i = 0; i < a.rank(); ++i) {
        require(i == 1 || a.dim(i) == b.dim(i), "concat_channels: shapes " + to_string(a.shape()) +
                                                    " and " + to_string(b.shape()) + " differ off axis 1");
    }
    const std::int64_t B = a.dim(0);
    std::int64_t inner = 1;
    for (std::size_t i = 2; i < a.rank(); ++i) inner *= a.dim(i);
    const std::int64_t na = a.dim(1) * inner;
    const std::int64_t nb = b.dim(1) * inner;
    std::vector<T> out(static_cast<std::size_t>(B * (na + nb)));
    for (std::int64_t i = 0; i < B; ++i) {
        std::copy_n(a.values().data() + i * na, na, out.data() + i * (na + nb));
        std::copy_n(b.values().data() + i * nb, nb, out.data() + i * (na + nb) + na);
    }
    Shape shape = a.shape();
    shape[1] = a.dim(1) + b.dim(1);
    auto ai = a.impl();
    auto bi = b.impl();
    return make_output<T>("concat_channels", std::move(shape), std::move(out), {a, b},
                          [ai, bi, B, na, nb](std::span<const T> g) {
                              for (std::int64_t i = 0; i < B; ++i) {
                                  const T* src = g.data() + i * (na + nb);
                                  if (wants_grad(ai)) {
                                      T* d = ai->grad_buffer().data() + i * na;
                                      for (std::int64_t k = 0; k < na; ++k) d[k] += src[k];
                                  }
                                  if (wants_grad(bi)) {
                                      T* d = bi->grad_buffer().data() + i * nb;
                                      for (std::int64_t k = 0; k < nb; ++k) d[k] += src[na + k];
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    require(x.defined(), "sum: missing operand");
    double acc = 0.0;
    for (T v : x.values()) acc += v;
    auto xi = x.impl();
    return make_output<T>("sum", Shape{}, std::vector<T>{static_cast<T>(acc)}, {x},
                          [xi](std::span<const T> g) {
                              auto& dx = xi->grad_buffer();
                              for (auto& d : dx) d += g[0];
                          });
}

template <typename T>
BasicTensor<T> weighted_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels,
                                      std::span<const T> class_weights) {
    require(logits.defined() && logits.rank() == 2, "weighted_cross_entropy expects (B, K) logits");
    const std::int64_t B = logits.dim(0);
    const std::int64_t K = logits.dim(1);
    require(B >= 1, "weighted_cross_entropy on empty batch");
    require(static_cast<std::int64_t>(labels.size()) == B, "weighted_cross_entropy: label count mismatch");
    require(static_cast<std::int64_t>(class_weights.size()) == K,
            "weighted_cross_entropy: need one weight per class");
    for (int y : labels) {
        require(y >= 0 && y < K, "weighted_cross_entropy: label " + std::to_string(y) + " out of range");
    }
    auto probs = std::make_shared<std::vector<T>>(softmax_rows(logits));
    const auto lv = logits.values();
    double total = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
        const T* row = lv.data() + b * K;
        const T mx = *std::max_element(row, row + K);
        double acc = 0.0;
        for (std::int64_t k = 0; k < K; ++k) acc += std::exp(static_cast<double>(row[k] - mx));
        const double lse = static_cast<double>(mx) + std::log(acc);
        const int y = labels[static_cast<std::size_t>(b)];
        total += static_cast<double>(class_weights[static_cast<std::size_t>(y)]) * (lse - row[y]);
    }
    const T loss = static_cast<T>(total / static_cast<double>(B));
    auto li = logits.impl();
    std::vector<int> ys(labels.begin(), labels.end());
    std::vector<T> ws(class_weights.begin(), class_weights.end());
    return make_output<T>("weighted_cross_entropy", Shape{}, std::vector<T>{loss}, {logits},
                          [li, probs, ys, ws, B, K](std::span<const T> g) {
                              auto& dl = li->grad_buffer();
                              for (std::int64_t b = 0; b < B; ++b) {
                                  const int y = ys[static_cast<std::size_t>(b)];
                                  const T scale = g[0] * ws[static_cast<std::size_t>(y)] / static_cast<T>(B);
                                  for (std::int64_t k = 0; k < K; ++k) {
                                      const auto i = static_cast<std::size_t>(b * K + k);
                                      dl[i] += scale * ((*probs)[i] - (k == y ? T(1) : T(0)));
                                  }
                              }
                          });
}

template <typename T>
std::vector<T> softmax_rows(const BasicTensor<T>& logits) {
    require(logits.defined() && logits.rank() == 2, "softmax_rows expects (B, K) logits");
    const std::int64_t B = logits.dim(0);
    const std::int64_t K = logits.dim(1);
    const auto lv = logits.values();
    std::vector<T> out(lv.size());
    for (std::int64_t b = 0; b < B; ++b) {
        const T* row = lv.data() + b * K;
        const T mx = *std::max_element(row, row + K);
        double acc = 0.0;
        for (std::int64_t k = 0; k < K; ++k) acc += std::exp(static_cast<double>(row[k] - mx));
        for (std::int64_t k = 0; k < K; ++k) {
            out[static_cast<std::size_t>(b * K + k)] =
                static_cast<T>(std::exp(static_cast<double>(row[k] - mx)) / acc);
        }
    }
    return out;
}

#define MFN_INSTANTIATE_OPS(T)                                                                         \
    template struct BatchNormState<T>;                                                                 \
    template BasicTensor<T> conv3d(const BasicTensor<T>&, const ConvParams<T>&);                       \
    template BasicTensor<T> batchnorm3d(const BasicTensor<T>&, BatchNormState<T>&);                    \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                               \
    template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                            \
    template BasicTensor<T> tanh(const BasicTensor<T>&);                                               \
    template BasicTensor<T> pointwise(PointwiseKind, const BasicTensor<T>&, const BasicTensor<T>*);    \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                    \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);             \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                \
    template BasicTensor<T> weighted_cross_entropy(const BasicTensor<T>&, std::span<const int>,        \
                                                   std::span<const T>);                                \
    template std::vector<T> softmax_rows(const BasicTensor<T>&);

MFN_INSTANTIATE_OPS(float)
MFN_INSTANTIATE_OPS(double)

#undef MFN_INSTANTIATE_OPS

} // namespace mfn::tensor
