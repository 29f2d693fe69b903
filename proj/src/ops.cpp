#include "rissc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace rissc::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC cmat(const std::vector<double>& v, std::size_t offset, std::size_t r, std::size_t c) {
    return MapC(v.data() + offset, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

Map mmat(std::vector<double>& v, std::size_t offset, std::size_t r, std::size_t c) {
    return Map(v.data() + offset, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(t.shape()));
}

void require_complex(const Tensor& t, const char* op) {
    if (t.rank() == 0 || t.shape().back() != 2)
        throw ShapeError(std::string(op) + ": expected trailing complex axis of size 2, got " + shape_str(t.shape()));
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    std::vector<double> out(m * n);
    mmat(out, 0, m, n).noalias() = cmat(a.node()->value, 0, m, k) * cmat(b.node()->value, 0, k, n);
    return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
        auto g = cmat(o.grad, 0, m, n);
        auto& pa = parent(o, 0);
        auto& pb = parent(o, 1);
        if (pa.requires_grad) mmat(pa.grad_buffer(), 0, m, k).noalias() += g * cmat(pb.value, 0, k, n).transpose();
        if (pb.requires_grad) mmat(pb.grad_buffer(), 0, k, n).noalias() += cmat(pa.value, 0, m, k).transpose() * g;
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(w, 2, "linear");
    if (x.rank() < 1 || x.shape().back() != w.dim(0))
        throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
    const auto in = w.dim(0), outw = w.dim(1);
    if (b.defined() && (b.rank() != 1 || b.dim(0) != outw))
        throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
    const auto rows = x.size() / in;
    Shape shape = x.shape();
    shape.back() = outw;
    std::vector<double> out(rows * outw);
    auto om = mmat(out, 0, rows, outw);
    om.noalias() = cmat(x.node()->value, 0, rows, in) * cmat(w.node()->value, 0, in, outw);
    std::vector<Tensor> parents{x, w};
    if (b.defined()) {
        om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.node()->value.data(), static_cast<Eigen::Index>(outw));
        parents.push_back(b);
    }
    return make_result(std::move(shape), std::move(out), std::move(parents), [rows, in, outw](Node& o) {
        auto g = cmat(o.grad, 0, rows, outw);
        auto& px = parent(o, 0);
        auto& pw = parent(o, 1);
        if (px.requires_grad) mmat(px.grad_buffer(), 0, rows, in).noalias() += g * cmat(pw.value, 0, in, outw).transpose();
        if (pw.requires_grad) mmat(pw.grad_buffer(), 0, in, outw).noalias() += cmat(px.value, 0, rows, in).transpose() * g;
        if (o.parents.size() > 2 && parent(o, 2).requires_grad) {
            auto& gb = parent(o, 2).grad_buffer();
            Eigen::Map<Eigen::RowVectorXd>(gb.data(), static_cast<Eigen::Index>(outw)) += g.colwise().sum();
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    require_rank(a, 3, "bmm");
    require_rank(b, 3, "bmm");
    const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2);
    const auto n = transpose_b ? b.dim(1) : b.dim(2);
    const auto bk = transpose_b ? b.dim(2) : b.dim(1);
    if (b.dim(0) != batch || bk != k)
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         (transpose_b ? " (b transposed)" : ""));
    const auto br = transpose_b ? n : k, bc = transpose_b ? k : n;
    std::vector<double> out(batch * m * n);
    for (std::size_t i = 0; i < batch; ++i) {
        auto am = cmat(a.node()->value, i * m * k, m, k);
        auto bmat = cmat(b.node()->value, i * br * bc, br, bc);
        if (transpose_b)
            mmat(out, i * m * n, m, n).noalias() = am * bmat.transpose();
        else
            mmat(out, i * m * n, m, n).noalias() = am * bmat;
    }
    return make_result({batch, m, n}, std::move(out), {a, b}, [=](Node& o) {
        auto& pa = parent(o, 0);
        auto& pb = parent(o, 1);
        for (std::size_t i = 0; i < batch; ++i) {
            auto g = cmat(o.grad, i * m * n, m, n);
            auto bmat = cmat(pb.value, i * br * bc, br, bc);
            auto am = cmat(pa.value, i * m * k, m, k);
            if (pa.requires_grad) {
                auto ga = mmat(pa.grad_buffer(), i * m * k, m, k);
                if (transpose_b)
                    ga.noalias() += g * bmat;
                else
                    ga.noalias() += g * bmat.transpose();
            }
            if (pb.requires_grad) {
                auto gb = mmat(pb.grad_buffer(), i * br * bc, br, bc);
                if (transpose_b)
                    gb.noalias() += g.transpose() * am;
                else
                    gb.noalias() += am.transpose() * g;
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    const bool scalar_b = b.size() == 1;
    const bool suffix = bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin());
    if (!scalar_b && !suffix)
        throw ShapeError("add: cannot broadcast " + shape_str(bs) + " onto " + shape_str(as));
    const auto n = a.size(), period = b.size();
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto& bv = b.node()->value;
    for (std::size_t i = 0; i < n; ++i) out[i] += bv[i % period];
    return make_result(as, std::move(out), {a, b}, [n, period](Node& o) {
        auto& pa = parent(o, 0);
        auto& pb = parent(o, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i % period] += o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto n = a.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    return make_result(a.shape(), std::move(out), {a, b}, [n](Node& o) {
        auto& pa = parent(o, 0);
        auto& pb = parent(o, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= c;
    return make_result(a.shape(), std::move(out), {a}, [c](Node& o) {
        auto& g = parent(o, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
    });
}

Tensor square(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= v;
    return make_result(a.shape(), std::move(out), {a}, [](Node& o) {
        auto& p = parent(o, 0);
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * p.value[i] * o.grad[i];
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return make_result(a.shape(), std::move(out), {a}, [](Node& o) {
        auto& p = parent(o, 0);
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p.value[i] > 0.0) g[i] += o.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_result({1}, {s}, {a}, [](Node& o) {
        auto& g = parent(o, 0).grad_buffer();
        for (auto& v : g) v += o.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    const auto& s = x.shape();
    const auto len = s[axis];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const auto outer = x.size() / (len * inner);
    std::vector<double> out(x.size());
    const auto& xv = x.node()->value;
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const auto base = o * len * inner + in;
            double mx = xv[base];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const double e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
        }
    return make_result(s, std::move(out), {x}, [outer, inner, len](Node& o) {
        auto& g = parent(o, 0).grad_buffer();
        for (std::size_t ob = 0; ob < outer; ++ob)
            for (std::size_t in = 0; in < inner; ++in) {
                const auto base = ob * len * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += o.grad[base + j * inner] * o.value[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const auto idx = base + j * inner;
                    g[idx] += o.value[idx] * (o.grad[idx] - dot);
                }
            }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
    const auto d = x.shape().back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match input " + shape_str(x.shape()));
    const auto rows = x.size() / d;
    std::vector<double> out(x.size());
    // xhat and 1/std are needed in backward.
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    const auto& xv = x.node()->value;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * is;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = h * gain[j] + bias[j];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gain, bias}, [rows, d, xhat, inv_std](Node& o) {
        auto& px = parent(o, 0);
        auto& pg = parent(o, 1);
        auto& pb = parent(o, 2);
        if (pg.requires_grad || pb.requires_grad) {
            auto& gg = pg.grad_buffer();
            auto& gb = pb.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) {
                    gg[j] += o.grad[r * d + j] * (*xhat)[r * d + j];
                    gb[j] += o.grad[r * d + j];
                }
        }
        if (!px.requires_grad) return;
        auto& gx = px.grad_buffer();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double gh = o.grad[r * d + j] * pg.value[j];
                s1 += gh;
                s2 += gh * (*xhat)[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
                const double gh = o.grad[r * d + j] * pg.value[j];
                gx[r * d + j] += (*inv_std)[r] * (gh - s1 * inv_d - (*xhat)[r * d + j] * s2 * inv_d);
            }
        }
    });
}

Tensor embedding(const Tensor& weight, std::span<const std::int64_t> ids, const Shape& ids_shape) {
    require_rank(weight, 2, "embedding");
    if (numel(ids_shape) != ids.size()) throw ShapeError("embedding: ids do not match shape " + shape_str(ids_shape));
    const auto vocab = weight.dim(0), e = weight.dim(1);
    std::vector<std::int64_t> idx(ids.begin(), ids.end());
    std::vector<double> out(idx.size() * e);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab)
            throw ShapeError("embedding: id " + std::to_string(idx[i]) + " outside vocabulary of " + std::to_string(vocab));
        std::copy_n(weight.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * e), e, out.begin() + static_cast<std::ptrdiff_t>(i * e));
    }
    Shape shape = ids_shape;
    shape.push_back(e);
    return make_result(std::move(shape), std::move(out), {weight}, [idx = std::move(idx), e](Node& o) {
        auto& g = parent(o, 0).grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < e; ++j) g[static_cast<std::size_t>(idx[i]) * e + j] += o.grad[i * e + j];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), {x}, [](Node& o) {
        auto& g = parent(o, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor swap_axes12(const Tensor& x) {
    require_rank(x, 4, "swap_axes12");
    const auto a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
    std::vector<double> out(x.size());
    const auto& xv = x.node()->value;
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < c; ++k)
                std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(((i * b + j) * c + k) * d), d,
                            out.begin() + static_cast<std::ptrdiff_t>(((i * c + k) * b + j) * d));
    return make_result({a, c, b, d}, std::move(out), {x}, [a, b, c, d](Node& o) {
        auto& g = parent(o, 0).grad_buffer();
        for (std::size_t i = 0; i < a; ++i)
            for (std::size_t j = 0; j < b; ++j)
                for (std::size_t k = 0; k < c; ++k)
                    for (std::size_t l = 0; l < d; ++l)
                        g[((i * b + j) * c + k) * d + l] += o.grad[((i * c + k) * b + j) * d + l];
    });
}

Tensor complex_mul(const Tensor& a, const Tensor& b) {
    require_complex(a, "complex_mul");
    if (a.shape() != b.shape())
        throw ShapeError("complex_mul: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto n = a.size() / 2;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double ar = a[2 * i], ai = a[2 * i + 1], br = b[2 * i], bi = b[2 * i + 1];
        out[2 * i] = ar * br - ai * bi;
        out[2 * i + 1] = ar * bi + ai * br;
    }
    return make_result(a.shape(), std::move(out), {a, b}, [n](Node& o) {
        // d/da of (a*b) contracted with g is g * conj(b), and symmetrically.
        auto& pa = parent(o, 0);
        auto& pb = parent(o, 1);
        for (int side = 0; side < 2; ++side) {
            auto& self = side == 0 ? pa : pb;
            const auto& other = side == 0 ? pb.value : pa.value;
            if (!self.requires_grad) continue;
            auto& g = self.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const double gr = o.grad[2 * i], gi = o.grad[2 * i + 1];
                const double orr = other[2 * i], oi = other[2 * i + 1];
                g[2 * i] += gr * orr + gi * oi;
                g[2 * i + 1] += -gr * oi + gi * orr;
            }
        }
    });
}

Tensor complex_scale(const Tensor& x, const Tensor& coef) {
    require_complex(x, "complex_scale");
    require_rank(coef, 2, "complex_scale");
    const auto rows = x.dim(0);
    if (coef.dim(0) != rows || coef.dim(1) != 2)
        throw ShapeError("complex_scale: coefficients " + shape_str(coef.shape()) + " do not match input " +
                         shape_str(x.shape()));
    const auto per_row = x.size() / (2 * rows);
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double cr = coef[2 * r], ci = coef[2 * r + 1];
        for (std::size_t i = 0; i < per_row; ++i) {
            const auto k = 2 * (r * per_row + i);
            out[k] = x[k] * cr - x[k + 1] * ci;
            out[k + 1] = x[k] * ci + x[k + 1] * cr;
        }
    }
    return make_result(x.shape(), std::move(out), {x, coef}, [rows, per_row](Node& o) {
        auto& px = parent(o, 0);
        auto& pc = parent(o, 1);
        for (std::size_t r = 0; r < rows; ++r) {
            const double cr = pc.value[2 * r], ci = pc.value[2 * r + 1];
            double acc_r = 0.0, acc_i = 0.0;
            for (std::size_t i = 0; i < per_row; ++i) {
                const auto k = 2 * (r * per_row + i);
                const double gr = o.grad[k], gi = o.grad[k + 1];
                if (px.requires_grad) {
                    auto& g = px.grad_buffer();
                    g[k] += gr * cr + gi * ci;
                    g[k + 1] += -gr * ci + gi * cr;
                }
                const double xr = px.value[k], xi = px.value[k + 1];
                acc_r += gr * xr + gi * xi;
                acc_i += -gr * xi + gi * xr;
            }
            if (pc.requires_grad) {
                auto& g = pc.grad_buffer();
                g[2 * r] += acc_r;
                g[2 * r + 1] += acc_i;
            }
        }
    });
}

Tensor normalize_mean_power(const Tensor& x, double floor) {
    require_complex(x, "normalize_mean_power");
    const auto count = static_cast<double>(x.size() / 2);
    double total = 0.0;
    for (double v : x.data()) total += v * v;
    const double power = total / count;
    const bool clamped = power < floor;
    const double s = 1.0 / std::sqrt(clamped ? floor : power);
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= s;
    return make_result(x.shape(), std::move(out), {x}, [s, clamped, count](Node& o) {
        auto& p = parent(o, 0);
        auto& g = p.grad_buffer();
        double gx = 0.0;
        if (!clamped)
            for (std::size_t i = 0; i < g.size(); ++i) gx += o.grad[i] * p.value[i];
        const double k = clamped ? 0.0 : s * s * s * gx / count;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * o.grad[i] - k * p.value[i];
    });
}

}  // namespace rissc::ad
