#include "pstf/core/ops.hpp"

#include <cmath>

namespace pstf {

namespace {

bool any_grad(std::initializer_list<const Tensor*> ts) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : ts)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

void axpy(Scalar c, const std::vector<Scalar>& x, std::vector<Scalar>& y) {
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) y[i] += c * x[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return lincomb(a, 1.0, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return lincomb(a, 1.0, b, -1.0); }

Tensor lincomb(const Tensor& a, Scalar ca, const Tensor& b, Scalar cb) {
    check_same_shape(a, b, "lincomb");
    const bool g = any_grad({&a, &b});
    Tensor out = make_node(a.shape(), g);
    const Scalar* pa = a.ptr();
    const Scalar* pb = b.ptr();
    Scalar* po = out.ptr();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = ca * pa[i] + cb * pb[i];
    if (g) {
        auto an = a.node(), bn = b.node();
        out.node()->parents = {an, bn};
        out.node()->backward = [an, bn, ca, cb](TensorNode& o) {
            if (an->requires_grad) {
                an->ensure_grad();
                axpy(ca, o.grad, an->grad);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                axpy(cb, o.grad, bn->grad);
            }
        };
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const bool g = any_grad({&a, &b});
    Tensor out = make_node(a.shape(), g);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] * b.ptr()[i];
    if (g) {
        auto an = a.node(), bn = b.node();
        out.node()->parents = {an, bn};
        out.node()->backward = [an, bn](TensorNode& o) {
            const int64_t n = o.numel();
            if (an->requires_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < n; ++i) an->grad[i] += o.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < n; ++i) bn->grad[i] += o.grad[i] * an->value[i];
            }
        };
    }
    return out;
}

Tensor scale(const Tensor& a, Scalar s) {
    const bool g = any_grad({&a});
    Tensor out = make_node(a.shape(), g);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.ptr()[i] = s * a.ptr()[i];
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an, s](TensorNode& o) {
            an->ensure_grad();
            axpy(s, o.grad, an->grad);
        };
    }
    return out;
}

Tensor add_scalar(const Tensor& a, Scalar s) {
    const bool g = any_grad({&a});
    Tensor out = make_node(a.shape(), g);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] + s;
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an](TensorNode& o) {
            an->ensure_grad();
            axpy(1.0, o.grad, an->grad);
        };
    }
    return out;
}

Tensor silu(const Tensor& a) {
    const bool g = any_grad({&a});
    Tensor out = make_node(a.shape(), g);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
        const Scalar x = a.ptr()[i];
        out.ptr()[i] = x / (1.0 + std::exp(-x));
    }
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an](TensorNode& o) {
            an->ensure_grad();
            const int64_t n = o.numel();
            for (int64_t i = 0; i < n; ++i) {
                const Scalar x = an->value[i];
                const Scalar s = 1.0 / (1.0 + std::exp(-x));
                an->grad[i] += o.grad[i] * s * (1.0 + x * (1.0 - s));
            }
        };
    }
    return out;
}

Tensor clamp01(const Tensor& a) {
    const bool g = any_grad({&a});
    Tensor out = make_node(a.shape(), g);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
        Scalar x = a.ptr()[i];
        out.ptr()[i] = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
    }
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an](TensorNode& o) {
            an->ensure_grad();
            const int64_t n = o.numel();
            for (int64_t i = 0; i < n; ++i) {
                const Scalar x = an->value[i];
                if (x > 0.0 && x < 1.0) an->grad[i] += o.grad[i];
            }
        };
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
        throw ConfigError("matmul: incompatible " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const bool g = any_grad({&a, &b});
    Tensor out = make_node({m, n}, g);
    const Scalar* pa = a.ptr();
    const Scalar* pb = b.ptr();
    Scalar* po = out.ptr();
    for (int i = 0; i < m; ++i) {
        Scalar* orow = po + (int64_t)i * n;
        for (int t = 0; t < k; ++t) {
            const Scalar av = pa[(int64_t)i * k + t];
            if (av == 0.0) continue;
            const Scalar* brow = pb + (int64_t)t * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (g) {
        auto an = a.node(), bn = b.node();
        out.node()->parents = {an, bn};
        out.node()->backward = [an, bn, m, k, n](TensorNode& o) {
            if (an->requires_grad) {
                an->ensure_grad();
                // dA = dC * B^T
                for (int i = 0; i < m; ++i)
                    for (int t = 0; t < k; ++t) {
                        Scalar acc = 0.0;
                        const Scalar* gr = o.grad.data() + (int64_t)i * n;
                        const Scalar* br = bn->value.data() + (int64_t)t * n;
                        for (int j = 0; j < n; ++j) acc += gr[j] * br[j];
                        an->grad[(int64_t)i * k + t] += acc;
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dB = A^T * dC
                for (int t = 0; t < k; ++t)
                    for (int i = 0; i < m; ++i) {
                        const Scalar av = an->value[(int64_t)i * k + t];
                        if (av == 0.0) continue;
                        Scalar* br = bn->grad.data() + (int64_t)t * n;
                        const Scalar* gr = o.grad.data() + (int64_t)i * n;
                        for (int j = 0; j < n; ++j) br[j] += av * gr[j];
                    }
            }
        };
    }
    return out;
}

Tensor transpose2d(const Tensor& a) {
    if (a.shape().size() != 2) throw ConfigError("transpose2d: need 2-d tensor");
    const int m = a.dim(0), n = a.dim(1);
    const bool g = any_grad({&a});
    Tensor out = make_node({n, m}, g);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.ptr()[(int64_t)j * m + i] = a.ptr()[(int64_t)i * n + j];
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an, m, n](TensorNode& o) {
            an->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    an->grad[(int64_t)i * n + j] += o.grad[(int64_t)j * m + i];
        };
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.dim(1) != w.dim(1))
        throw ConfigError("linear: incompatible x" + shape_str(x.shape()) + " w" +
                          shape_str(w.shape()));
    const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
    if (b.defined() && (b.shape().size() != 1 || b.dim(0) != out_dim))
        throw ConfigError("linear: bad bias shape");
    const bool g = b.defined() ? any_grad({&x, &w, &b}) : any_grad({&x, &w});
    Tensor out = make_node({n, out_dim}, g);
    for (int i = 0; i < n; ++i) {
        const Scalar* xr = x.ptr() + (int64_t)i * in;
        Scalar* orow = out.ptr() + (int64_t)i * out_dim;
        for (int o = 0; o < out_dim; ++o) {
            const Scalar* wr = w.ptr() + (int64_t)o * in;
            Scalar acc = b.defined() ? b.ptr()[o] : 0.0;
            for (int t = 0; t < in; ++t) acc += xr[t] * wr[t];
            orow[o] = acc;
        }
    }
    if (g) {
        auto xn = x.node(), wn = w.node();
        auto bnode = b.defined() ? b.node() : nullptr;
        out.node()->parents = {xn, wn};
        if (bnode) out.node()->parents.push_back(bnode);
        out.node()->backward = [xn, wn, bnode, n, in, out_dim](TensorNode& o) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    const Scalar* gr = o.grad.data() + (int64_t)i * out_dim;
                    Scalar* xg = xn->grad.data() + (int64_t)i * in;
                    for (int j = 0; j < out_dim; ++j) {
                        const Scalar gv = gr[j];
                        if (gv == 0.0) continue;
                        const Scalar* wr = wn->value.data() + (int64_t)j * in;
                        for (int t = 0; t < in; ++t) xg[t] += gv * wr[t];
                    }
                }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    const Scalar* gr = o.grad.data() + (int64_t)i * out_dim;
                    const Scalar* xr = xn->value.data() + (int64_t)i * in;
                    for (int j = 0; j < out_dim; ++j) {
                        const Scalar gv = gr[j];
                        if (gv == 0.0) continue;
                        Scalar* wg = wn->grad.data() + (int64_t)j * in;
                        for (int t = 0; t < in; ++t) wg[t] += gv * xr[t];
                    }
                }
            }
            if (bnode && bnode->requires_grad) {
                bnode->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    const Scalar* gr = o.grad.data() + (int64_t)i * out_dim;
                    for (int j = 0; j < out_dim; ++j) bnode->grad[j] += gr[j];
                }
            }
        };
    }
    return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (numel_of(shape) != a.numel())
        throw ConfigError("reshape: numel mismatch " + shape_str(a.shape()) + " -> " +
                          shape_str(shape));
    const bool g = any_grad({&a});
    Tensor out = make_node(shape, g);
    out.node()->value = a.data();
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an](TensorNode& o) {
            an->ensure_grad();
            axpy(1.0, o.grad, an->grad);
        };
    }
    return out;
}

Tensor concat0(const Tensor& a, const Tensor& b) {
    Shape sa = a.shape(), sb = b.shape();
    if (sa.size() != sb.size() || sa.empty())
        throw ConfigError("concat0: rank mismatch");
    for (size_t i = 1; i < sa.size(); ++i)
        if (sa[i] != sb[i]) throw ConfigError("concat0: trailing dims differ");
    Shape so = sa;
    so[0] += sb[0];
    const bool g = any_grad({&a, &b});
    Tensor out = make_node(so, g);
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.numel());
    if (g) {
        auto an = a.node(), bn = b.node();
        const int64_t na = a.numel();
        out.node()->parents = {an, bn};
        out.node()->backward = [an, bn, na](TensorNode& o) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < na; ++i) an->grad[i] += o.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const int64_t nb = (int64_t)bn->value.size();
                for (int64_t i = 0; i < nb; ++i) bn->grad[i] += o.grad[na + i];
            }
        };
    }
    return out;
}

Tensor slice_cols(const Tensor& a, int start, int len) {
    if (a.shape().size() != 2 || start < 0 || start + len > a.dim(1))
        throw ConfigError("slice_cols: bad range");
    const int t = a.dim(0), d = a.dim(1);
    const bool g = any_grad({&a});
    Tensor out = make_node({t, len}, g);
    for (int i = 0; i < t; ++i)
        std::copy(a.ptr() + (int64_t)i * d + start, a.ptr() + (int64_t)i * d + start + len,
                  out.ptr() + (int64_t)i * len);
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an, start, len, t, d](TensorNode& o) {
            an->ensure_grad();
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < len; ++j)
                    an->grad[(int64_t)i * d + start + j] += o.grad[(int64_t)i * len + j];
        };
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ConfigError("concat_cols: empty");
    const int t = parts[0].dim(0);
    int d = 0;
    bool g = false;
    for (const Tensor& p : parts) {
        if (p.shape().size() != 2 || p.dim(0) != t) throw ConfigError("concat_cols: row mismatch");
        d += p.dim(1);
        g = g || (grad_enabled() && p.requires_grad());
    }
    Tensor out = make_node({t, d}, g);
    int off = 0;
    for (const Tensor& p : parts) {
        const int pd = p.dim(1);
        for (int i = 0; i < t; ++i)
            std::copy(p.ptr() + (int64_t)i * pd, p.ptr() + (int64_t)(i + 1) * pd,
                      out.ptr() + (int64_t)i * d + off);
        off += pd;
    }
    if (g) {
        std::vector<std::shared_ptr<TensorNode>> nodes;
        std::vector<int> widths;
        for (const Tensor& p : parts) {
            nodes.push_back(p.node());
            widths.push_back(p.dim(1));
        }
        out.node()->parents = nodes;
        out.node()->backward = [nodes, widths, t, d](TensorNode& o) {
            int off = 0;
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                auto& n = nodes[pi];
                const int pd = widths[pi];
                if (n->requires_grad) {
                    n->ensure_grad();
                    for (int i = 0; i < t; ++i)
                        for (int j = 0; j < pd; ++j)
                            n->grad[(int64_t)i * pd + j] += o.grad[(int64_t)i * d + off + j];
                }
                off += pd;
            }
        };
    }
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.shape().size() != 2) throw ConfigError("gather_rows: need 2-d table");
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v) throw ConfigError("gather_rows: id out of range");
    const bool g = any_grad({&table});
    Tensor out = make_node({(int)ids.size(), d}, g);
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(table.ptr() + (int64_t)ids[i] * d, table.ptr() + (int64_t)(ids[i] + 1) * d,
                  out.ptr() + (int64_t)i * d);
    if (g) {
        auto tn = table.node();
        out.node()->parents = {tn};
        out.node()->backward = [tn, ids, d](TensorNode& o) {
            tn->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j)
                    tn->grad[(int64_t)ids[i] * d + j] += o.grad[(int64_t)i * d + j];
        };
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    if (x.shape().size() != 3 || w.shape().size() != 4 || x.dim(0) != w.dim(1))
        throw ConfigError("conv2d: incompatible x" + shape_str(x.shape()) + " w" +
                          shape_str(w.shape()));
    const int ci = x.dim(0), h = x.dim(1), wid = x.dim(2);
    const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wid + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ConfigError("conv2d: empty output");
    const bool g = b.defined() ? any_grad({&x, &w, &b}) : any_grad({&x, &w});
    Tensor out = make_node({co, ho, wo}, g);

    const Scalar* px = x.ptr();
    const Scalar* pw = w.ptr();
    Scalar* po = out.ptr();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int oc = 0; oc < co; ++oc) {
        const Scalar bias = b.defined() ? b.ptr()[oc] : 0.0;
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                Scalar acc = bias;
                for (int ic = 0; ic < ci; ++ic) {
                    const Scalar* xc = px + (int64_t)ic * h * wid;
                    const Scalar* wc = pw + (((int64_t)oc * ci + ic) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const Scalar* xrow = xc + (int64_t)iy * wid;
                        const Scalar* wrow = wc + (int64_t)ky * kw;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= wid) continue;
                            acc += xrow[ix] * wrow[kx];
                        }
                    }
                }
                po[((int64_t)oc * ho + oy) * wo + ox] = acc;
            }
        }
    }

    if (g) {
        auto xn = x.node(), wn = w.node();
        auto bnode = b.defined() ? b.node() : nullptr;
        out.node()->parents = {xn, wn};
        if (bnode) out.node()->parents.push_back(bnode);
        out.node()->backward = [xn, wn, bnode, ci, h, wid, co, kh, kw, ho, wo, stride,
                                pad](TensorNode& o) {
            const Scalar* go = o.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                Scalar* gx = xn->grad.data();
                const Scalar* pw = wn->value.data();
                // gather form: each input pixel sums its downstream outputs
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int ic = 0; ic < ci; ++ic) {
                    for (int iy = 0; iy < h; ++iy) {
                        for (int ix = 0; ix < wid; ++ix) {
                            Scalar acc = 0.0;
                            for (int ky = 0; ky < kh; ++ky) {
                                const int ty = iy + pad - ky;
                                if (ty < 0 || ty % stride != 0) continue;
                                const int oy = ty / stride;
                                if (oy >= ho) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int tx = ix + pad - kx;
                                    if (tx < 0 || tx % stride != 0) continue;
                                    const int ox = tx / stride;
                                    if (ox >= wo) continue;
                                    for (int oc = 0; oc < co; ++oc) {
                                        acc += pw[(((int64_t)oc * ci + ic) * kh + ky) * kw + kx] *
                                               go[((int64_t)oc * ho + oy) * wo + ox];
                                    }
                                }
                            }
                            gx[((int64_t)ic * h + iy) * wid + ix] += acc;
                        }
                    }
                }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                Scalar* gw = wn->grad.data();
                const Scalar* px = xn->value.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int oc = 0; oc < co; ++oc) {
                    for (int ic = 0; ic < ci; ++ic) {
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                Scalar acc = 0.0;
                                for (int oy = 0; oy < ho; ++oy) {
                                    const int iy = oy * stride + ky - pad;
                                    if (iy < 0 || iy >= h) continue;
                                    const Scalar* xrow = px + ((int64_t)ic * h + iy) * wid;
                                    const Scalar* grow = go + ((int64_t)oc * ho + oy) * wo;
                                    for (int ox = 0; ox < wo; ++ox) {
                                        const int ix = ox * stride + kx - pad;
                                        if (ix < 0 || ix >= wid) continue;
                                        acc += xrow[ix] * grow[ox];
                                    }
                                }
                                gw[(((int64_t)oc * ci + ic) * kh + ky) * kw + kx] += acc;
                            }
                        }
                    }
                }
            }
            if (bnode && bnode->requires_grad) {
                bnode->ensure_grad();
                for (int oc = 0; oc < co; ++oc) {
                    Scalar acc = 0.0;
                    const Scalar* grow = go + (int64_t)oc * ho * wo;
                    for (int i = 0; i < ho * wo; ++i) acc += grow[i];
                    bnode->grad[oc] += acc;
                }
            }
        };
    }
    return out;
}

Tensor upsample_nearest2(const Tensor& x) {
    if (x.shape().size() != 3) throw ConfigError("upsample_nearest2: need [c,h,w]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const bool g = any_grad({&x});
    Tensor out = make_node({c, 2 * h, 2 * w}, g);
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                out.ptr()[((int64_t)ic * 2 * h + y) * 2 * w + xx] =
                    x.ptr()[((int64_t)ic * h + y / 2) * w + xx / 2];
    if (g) {
        auto xn = x.node();
        out.node()->parents = {xn};
        out.node()->backward = [xn, c, h, w](TensorNode& o) {
            xn->ensure_grad();
            for (int ic = 0; ic < c; ++ic)
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        xn->grad[((int64_t)ic * h + y / 2) * w + xx / 2] +=
                            o.grad[((int64_t)ic * 2 * h + y) * 2 * w + xx];
        };
    }
    return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& v) {
    if (x.shape().size() != 3 || v.shape().size() != 1 || v.dim(0) != x.dim(0))
        throw ConfigError("add_channel_bias: shape mismatch");
    const int c = x.dim(0);
    const int hw = x.dim(1) * x.dim(2);
    const bool g = any_grad({&x, &v});
    Tensor out = make_node(x.shape(), g);
    for (int ic = 0; ic < c; ++ic) {
        const Scalar bias = v.ptr()[ic];
        for (int i = 0; i < hw; ++i)
            out.ptr()[(int64_t)ic * hw + i] = x.ptr()[(int64_t)ic * hw + i] + bias;
    }
    if (g) {
        auto xn = x.node(), vn = v.node();
        out.node()->parents = {xn, vn};
        out.node()->backward = [xn, vn, c, hw](TensorNode& o) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                axpy(1.0, o.grad, xn->grad);
            }
            if (vn->requires_grad) {
                vn->ensure_grad();
                for (int ic = 0; ic < c; ++ic) {
                    Scalar acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += o.grad[(int64_t)ic * hw + i];
                    vn->grad[ic] += acc;
                }
            }
        };
    }
    return out;
}

namespace {

// Shared normalization backward:
// dx = (1/sigma) * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
void norm_group_backward(const Scalar* go, const Scalar* xhat, const Scalar* gamma_per_elem,
                         Scalar inv_sigma, int64_t n, Scalar* gx) {
    Scalar mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const Scalar dxh = go[i] * gamma_per_elem[i];
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xhat[i];
    }
    mean_dxhat /= (Scalar)n;
    mean_dxhat_xhat /= (Scalar)n;
    for (int64_t i = 0; i < n; ++i) {
        const Scalar dxh = go[i] * gamma_per_elem[i];
        gx[i] += inv_sigma * (dxh - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
}

}  // namespace

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  Scalar eps) {
    if (x.shape().size() != 3) throw ConfigError("group_norm: need [c,h,w]");
    const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (c % groups != 0) throw ConfigError("group_norm: channels not divisible by groups");
    if (gamma.dim(0) != c || beta.dim(0) != c) throw ConfigError("group_norm: affine shape");
    const int cg = c / groups;
    const int64_t gn = (int64_t)cg * hw;
    const bool g = any_grad({&x, &gamma, &beta});
    Tensor out = make_node(x.shape(), g);

    auto xhat = std::make_shared<std::vector<Scalar>>(x.data().size());
    auto inv_sigma = std::make_shared<std::vector<Scalar>>(groups);
    for (int gi = 0; gi < groups; ++gi) {
        const Scalar* px = x.ptr() + (int64_t)gi * gn;
        Scalar mean = 0.0;
        for (int64_t i = 0; i < gn; ++i) mean += px[i];
        mean /= (Scalar)gn;
        Scalar var = 0.0;
        for (int64_t i = 0; i < gn; ++i) {
            const Scalar d = px[i] - mean;
            var += d * d;
        }
        var /= (Scalar)gn;
        const Scalar is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[gi] = is;
        Scalar* xh = xhat->data() + (int64_t)gi * gn;
        for (int64_t i = 0; i < gn; ++i) xh[i] = (px[i] - mean) * is;
    }
    for (int ic = 0; ic < c; ++ic) {
        const Scalar ga = gamma.ptr()[ic], be = beta.ptr()[ic];
        const Scalar* xh = xhat->data() + (int64_t)ic * hw;
        Scalar* po = out.ptr() + (int64_t)ic * hw;
        for (int i = 0; i < hw; ++i) po[i] = ga * xh[i] + be;
    }

    if (g) {
        auto xn = x.node(), gn_ = gamma.node(), bn = beta.node();
        out.node()->parents = {xn, gn_, bn};
        out.node()->backward = [xn, gn_, bn, xhat, inv_sigma, groups, cg, hw, c](TensorNode& o) {
            if (gn_->requires_grad) {
                gn_->ensure_grad();
                for (int ic = 0; ic < c; ++ic) {
                    Scalar acc = 0.0;
                    for (int i = 0; i < hw; ++i)
                        acc += o.grad[(int64_t)ic * hw + i] * (*xhat)[(int64_t)ic * hw + i];
                    gn_->grad[ic] += acc;
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int ic = 0; ic < c; ++ic) {
                    Scalar acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += o.grad[(int64_t)ic * hw + i];
                    bn->grad[ic] += acc;
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                const int64_t gsz = (int64_t)cg * hw;
                std::vector<Scalar> gamma_elem(gsz);
                for (int gi = 0; gi < groups; ++gi) {
                    for (int j = 0; j < cg; ++j) {
                        const Scalar ga = gn_->value[(size_t)gi * cg + j];
                        for (int i = 0; i < hw; ++i) gamma_elem[(int64_t)j * hw + i] = ga;
                    }
                    norm_group_backward(o.grad.data() + (int64_t)gi * gsz,
                                        xhat->data() + (int64_t)gi * gsz, gamma_elem.data(),
                                        (*inv_sigma)[gi], gsz,
                                        xn->grad.data() + (int64_t)gi * gsz);
                }
            }
        };
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
    if (x.shape().size() != 2) throw ConfigError("layer_norm: need [t,d]");
    const int t = x.dim(0), d = x.dim(1);
    if (gamma.dim(0) != d || beta.dim(0) != d) throw ConfigError("layer_norm: affine shape");
    const bool g = any_grad({&x, &gamma, &beta});
    Tensor out = make_node(x.shape(), g);

    auto xhat = std::make_shared<std::vector<Scalar>>(x.data().size());
    auto inv_sigma = std::make_shared<std::vector<Scalar>>(t);
    for (int i = 0; i < t; ++i) {
        const Scalar* px = x.ptr() + (int64_t)i * d;
        Scalar mean = 0.0;
        for (int j = 0; j < d; ++j) mean += px[j];
        mean /= (Scalar)d;
        Scalar var = 0.0;
        for (int j = 0; j < d; ++j) {
            const Scalar dd = px[j] - mean;
            var += dd * dd;
        }
        var /= (Scalar)d;
        const Scalar is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[i] = is;
        Scalar* xh = xhat->data() + (int64_t)i * d;
        Scalar* po = out.ptr() + (int64_t)i * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (px[j] - mean) * is;
            po[j] = gamma.ptr()[j] * xh[j] + beta.ptr()[j];
        }
    }

    if (g) {
        auto xn = x.node(), gn = gamma.node(), bn = beta.node();
        out.node()->parents = {xn, gn, bn};
        out.node()->backward = [xn, gn, bn, xhat, inv_sigma, t, d](TensorNode& o) {
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (int j = 0; j < d; ++j) {
                    Scalar acc = 0.0;
                    for (int i = 0; i < t; ++i)
                        acc += o.grad[(int64_t)i * d + j] * (*xhat)[(int64_t)i * d + j];
                    gn->grad[j] += acc;
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int j = 0; j < d; ++j) {
                    Scalar acc = 0.0;
                    for (int i = 0; i < t; ++i) acc += o.grad[(int64_t)i * d + j];
                    bn->grad[j] += acc;
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int i = 0; i < t; ++i)
                    norm_group_backward(o.grad.data() + (int64_t)i * d,
                                        xhat->data() + (int64_t)i * d, gn->value.data(),
                                        (*inv_sigma)[i], d, xn->grad.data() + (int64_t)i * d);
            }
        };
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.shape().size() != 2) throw ConfigError("softmax_rows: need [r,c]");
    const int r = x.dim(0), c = x.dim(1);
    const bool g = any_grad({&x});
    Tensor out = make_node(x.shape(), g);
    for (int i = 0; i < r; ++i) {
        const Scalar* px = x.ptr() + (int64_t)i * c;
        Scalar* po = out.ptr() + (int64_t)i * c;
        Scalar mx = px[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, px[j]);
        Scalar sum = 0.0;
        for (int j = 0; j < c; ++j) {
            po[j] = std::exp(px[j] - mx);
            sum += po[j];
        }
        const Scalar inv = 1.0 / sum;
        for (int j = 0; j < c; ++j) po[j] *= inv;
    }
    if (g) {
        auto xn = x.node();
        out.node()->parents = {xn};
        out.node()->backward = [xn, r, c](TensorNode& o) {
            xn->ensure_grad();
            for (int i = 0; i < r; ++i) {
                const Scalar* p = o.value.data() + (int64_t)i * c;
                const Scalar* go = o.grad.data() + (int64_t)i * c;
                Scalar dot = 0.0;
                for (int j = 0; j < c; ++j) dot += go[j] * p[j];
                Scalar* gx = xn->grad.data() + (int64_t)i * c;
                for (int j = 0; j < c; ++j) gx[j] += p[j] * (go[j] - dot);
            }
        };
    }
    return out;
}

Tensor l2_normalize(const Tensor& x, Scalar eps) {
    const bool g = any_grad({&x});
    Tensor out = make_node(x.shape(), g);
    const int64_t n = x.numel();
    Scalar norm = 0.0;
    for (int64_t i = 0; i < n; ++i) norm += x.ptr()[i] * x.ptr()[i];
    norm = std::max(std::sqrt(norm), eps);
    const Scalar inv = 1.0 / norm;
    for (int64_t i = 0; i < n; ++i) out.ptr()[i] = x.ptr()[i] * inv;
    if (g) {
        auto xn = x.node();
        out.node()->parents = {xn};
        out.node()->backward = [xn, inv](TensorNode& o) {
            xn->ensure_grad();
            const int64_t n = o.numel();
            Scalar dot = 0.0;
            for (int64_t i = 0; i < n; ++i) dot += o.grad[i] * o.value[i];
            for (int64_t i = 0; i < n; ++i)
                xn->grad[i] += inv * (o.grad[i] - o.value[i] * dot);
        };
    }
    return out;
}

Tensor sum_all(const Tensor& a) {
    const bool g = any_grad({&a});
    Tensor out = make_node({1}, g);
    Scalar acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.ptr()[i];
    out.ptr()[0] = acc;
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an](TensorNode& o) {
            an->ensure_grad();
            const Scalar gv = o.grad[0];
            for (auto& v : an->grad) v += gv;
        };
    }
    return out;
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / (Scalar)a.numel()); }

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    const bool g = any_grad({&a, &b});
    Tensor out = make_node({1}, g);
    const int64_t n = a.numel();
    Scalar acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const Scalar d = a.ptr()[i] - b.ptr()[i];
        acc += d * d;
    }
    out.ptr()[0] = acc / (Scalar)n;
    if (g) {
        auto an = a.node(), bn = b.node();
        out.node()->parents = {an, bn};
        out.node()->backward = [an, bn, n](TensorNode& o) {
            const Scalar c = 2.0 * o.grad[0] / (Scalar)n;
            if (an->requires_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    an->grad[i] += c * (an->value[i] - bn->value[i]);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    bn->grad[i] -= c * (an->value[i] - bn->value[i]);
            }
        };
    }
    return out;
}

Tensor dot_const(const Tensor& a, const std::vector<Scalar>& w) {
    if ((int64_t)w.size() != a.numel()) throw ConfigError("dot_const: length mismatch");
    const bool g = any_grad({&a});
    Tensor out = make_node({1}, g);
    Scalar acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.ptr()[i] * w[(size_t)i];
    out.ptr()[0] = acc;
    if (g) {
        auto an = a.node();
        out.node()->parents = {an};
        out.node()->backward = [an, w](TensorNode& o) {
            an->ensure_grad();
            const Scalar gv = o.grad[0];
            for (size_t i = 0; i < w.size(); ++i) an->grad[i] += gv * w[i];
        };
    }
    return out;
}

}  // namespace pstf
