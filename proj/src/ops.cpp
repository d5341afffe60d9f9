#include "turbstoch/ops.hpp"

#include <algorithm>
#include <cmath>

#include "turbstoch/errors.hpp"

namespace turbstoch {

namespace {

Tape* tape_of(const Var& a) { return a.recorded() ? a.tape : nullptr; }

Tape* tape_of(const Var& a, const Var& b) {
    Tape* ta = tape_of(a);
    Tape* tb = tape_of(b);
    if (ta && tb && ta != tb) throw ContractError("operands recorded on different tapes");
    return ta ? ta : tb;
}

Tape* tape_of(const Var& a, const Var& b, const Var& c) {
    Tape* t = tape_of(a, b);
    Tape* tc = tape_of(c);
    if (t && tc && t != tc) throw ContractError("operands recorded on different tapes");
    return t ? t : tc;
}

Var finish(std::shared_ptr<Tensor3> value, Tape* tape,
           const std::function<std::function<void(Tape&)>(int)>& make_back) {
    Var out;
    out.val = value;
    if (tape) {
        out.tape = tape;
        int on = int(tape->num_nodes());
        out.node = tape->push(value->batch, value->channels, value->length, make_back(on));
    }
    return out;
}

void check_binary_shapes(const Tensor3& a, const Tensor3& b, const char* op) {
    if (!a.same_shape(b) && !a.is_scalar() && !b.is_scalar())
        throw ShapeError(std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
}

// Accumulate go (shaped like the output) into the gradient of an operand that
// may be a broadcast scalar; `factor(i)` is d out[i] / d operand[coord].
template <typename F>
void accum_operand(Tensor3& g, const Tensor3& go, bool operand_scalar, F&& factor) {
    size_t n = go.data.size();
    if (operand_scalar) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += go.data[i] * factor(i);
        g.data[0] += s;
    } else {
        for (size_t i = 0; i < n; ++i) g.data[i] += go.data[i] * factor(i);
    }
}

}  // namespace

// ---------------------------------------------------------------- pointwise

Var add(const Var& a, const Var& b) {
    check_binary_shapes(a.v(), b.v(), "add");
    const Tensor3& av = a.v();
    const Tensor3& bv = b.v();
    bool as = av.is_scalar() && !bv.is_scalar();
    bool bs = bv.is_scalar() && !av.is_scalar();
    auto out = std::make_shared<Tensor3>(as ? bv : av);
    if (as) {
        for (double& v : out->data) v += av.data[0];
    } else if (bs) {
        for (double& v : out->data) v += bv.data[0];
    } else {
        for (size_t i = 0; i < out->data.size(); ++i) out->data[i] += bv.data[i];
    }
    Tape* tp = tape_of(a, b);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node, bn = b.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            if (an >= 0) accum_operand(t.grad(an), go, as, [](size_t) { return 1.0; });
            if (bn >= 0) accum_operand(t.grad(bn), go, bs, [](size_t) { return 1.0; });
        };
    });
}

Var sub(const Var& a, const Var& b) {
    check_binary_shapes(a.v(), b.v(), "sub");
    const Tensor3& av = a.v();
    const Tensor3& bv = b.v();
    bool as = av.is_scalar() && !bv.is_scalar();
    bool bs = bv.is_scalar() && !av.is_scalar();
    auto out = std::make_shared<Tensor3>(as ? Tensor3(bv.batch, bv.channels, bv.length) : av);
    if (as) {
        for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = av.data[0] - bv.data[i];
    } else if (bs) {
        for (double& v : out->data) v -= bv.data[0];
    } else {
        for (size_t i = 0; i < out->data.size(); ++i) out->data[i] -= bv.data[i];
    }
    Tape* tp = tape_of(a, b);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node, bn = b.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            if (an >= 0) accum_operand(t.grad(an), go, as, [](size_t) { return 1.0; });
            if (bn >= 0) accum_operand(t.grad(bn), go, bs, [](size_t) { return -1.0; });
        };
    });
}

Var mul(const Var& a, const Var& b) {
    check_binary_shapes(a.v(), b.v(), "mul");
    auto av = a.val;
    auto bv = b.val;
    bool as = av->is_scalar() && !bv->is_scalar();
    bool bs = bv->is_scalar() && !av->is_scalar();
    const Tensor3& base = as ? *bv : *av;
    auto out = std::make_shared<Tensor3>(base.batch, base.channels, base.length);
    for (size_t i = 0; i < out->data.size(); ++i) {
        double x = as ? av->data[0] : av->data[i];
        double y = bs ? bv->data[0] : bv->data[i];
        out->data[i] = x * y;
    }
    Tape* tp = tape_of(a, b);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node, bn = b.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            if (an >= 0)
                accum_operand(t.grad(an), go, as,
                              [&](size_t i) { return bs ? bv->data[0] : bv->data[i]; });
            if (bn >= 0)
                accum_operand(t.grad(bn), go, bs,
                              [&](size_t i) { return as ? av->data[0] : av->data[i]; });
        };
    });
}

Var div(const Var& a, const Var& b) {
    check_binary_shapes(a.v(), b.v(), "div");
    auto av = a.val;
    auto bv = b.val;
    for (double d : bv->data)
        if (d == 0.0) throw DomainError("division by zero");
    bool as = av->is_scalar() && !bv->is_scalar();
    bool bs = bv->is_scalar() && !av->is_scalar();
    const Tensor3& base = as ? *bv : *av;
    auto out = std::make_shared<Tensor3>(base.batch, base.channels, base.length);
    for (size_t i = 0; i < out->data.size(); ++i) {
        double x = as ? av->data[0] : av->data[i];
        double y = bs ? bv->data[0] : bv->data[i];
        out->data[i] = x / y;
    }
    Tape* tp = tape_of(a, b);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node, bn = b.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            if (an >= 0)
                accum_operand(t.grad(an), go, as, [&](size_t i) {
                    double y = bs ? bv->data[0] : bv->data[i];
                    return 1.0 / y;
                });
            if (bn >= 0)
                accum_operand(t.grad(bn), go, bs, [&](size_t i) {
                    double x = as ? av->data[0] : av->data[i];
                    double y = bs ? bv->data[0] : bv->data[i];
                    return -x / (y * y);
                });
        };
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double s) {
    auto out = std::make_shared<Tensor3>(a.v());
    for (double& v : out->data) v += s;
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
        };
    });
}

Var mul_scalar(const Var& a, double s) {
    auto out = std::make_shared<Tensor3>(a.v());
    for (double& v : out->data) v *= s;
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += s * go.data[i];
        };
    });
}

Var pow_int(const Var& a, int p) {
    if (p < 1) throw ContractError("pow_int requires p >= 1");
    auto av = a.val;
    auto out = std::make_shared<Tensor3>(av->batch, av->channels, av->length);
    for (size_t i = 0; i < out->data.size(); ++i) {
        double x = av->data[i], r = x;
        for (int q = 1; q < p; ++q) r *= x;
        out->data[i] = r;
    }
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (size_t i = 0; i < go.data.size(); ++i) {
                double x = av->data[i], r = double(p);
                for (int q = 1; q < p; ++q) r *= x;
                ga.data[i] += go.data[i] * r;
            }
        };
    });
}

Var pow_real(const Var& a, double p) {
    auto av = a.val;
    for (double x : av->data)
        if (x <= 0.0) throw DomainError("pow_real requires strictly positive values");
    auto out = std::make_shared<Tensor3>(av->batch, av->channels, av->length);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = std::pow(av->data[i], p);
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    auto ov = out;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (size_t i = 0; i < go.data.size(); ++i)
                ga.data[i] += go.data[i] * p * ov->data[i] / av->data[i];
        };
    });
}

Var log_(const Var& a, double eps) {
    auto av = a.val;
    auto out = std::make_shared<Tensor3>(av->batch, av->channels, av->length);
    for (size_t i = 0; i < out->data.size(); ++i) {
        double x = av->data[i];
        if (eps > 0.0) {
            out->data[i] = std::log(std::max(x, eps));
        } else {
            if (x <= 0.0) throw DomainError("log of non-positive value");
            out->data[i] = std::log(x);
        }
    }
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (size_t i = 0; i < go.data.size(); ++i) {
                double x = av->data[i];
                if (eps > 0.0 && x <= eps) continue;  // clamped coordinate
                ga.data[i] += go.data[i] / x;
            }
        };
    });
}

Var mean_all(const Var& a) {
    auto av = a.val;
    double s = 0.0;
    for (double v : av->data) s += v;
    size_t n = av->data.size();
    auto out = std::make_shared<Tensor3>(Tensor3::scalar(s / double(n)));
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            double g = t.grad(on).data[0] / double(n);
            Tensor3& ga = t.grad(an);
            for (size_t i = 0; i < n; ++i) ga.data[i] += g;
        };
    });
}

Var sum_all(const Var& a) {
    auto av = a.val;
    double s = 0.0;
    for (double v : av->data) s += v;
    auto out = std::make_shared<Tensor3>(Tensor3::scalar(s));
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    size_t n = av->data.size();
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            double g = t.grad(on).data[0];
            Tensor3& ga = t.grad(an);
            for (size_t i = 0; i < n; ++i) ga.data[i] += g;
        };
    });
}

Var relu(const Var& a) {
    auto av = a.val;
    auto out = std::make_shared<Tensor3>(av->batch, av->channels, av->length);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = std::max(av->data[i], 0.0);
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            // subgradient at exactly 0 is 0
            for (size_t i = 0; i < go.data.size(); ++i)
                if (av->data[i] > 0.0) ga.data[i] += go.data[i];
        };
    });
}

// --------------------------------------------------------------- structural

Var slice_x(const Var& a, int64_t start, int64_t len) {
    const Tensor3& av = a.v();
    if (start < 0 || len < 1 || start + len > av.length)
        throw ShapeError("slice_x out of range: start=" + std::to_string(start) +
                         " len=" + std::to_string(len) + " of " + std::to_string(av.length));
    auto out = std::make_shared<Tensor3>(av.batch, av.channels, len);
    for (int64_t b = 0; b < av.batch; ++b)
        for (int64_t c = 0; c < av.channels; ++c) {
            const double* src = av.row(b, c) + start;
            double* dst = out->row(b, c);
            std::copy(src, src + len, dst);
        }
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    auto avp = a.val;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (int64_t b = 0; b < avp->batch; ++b)
                for (int64_t c = 0; c < avp->channels; ++c) {
                    const double* g = go.row(b, c);
                    double* dst = ga.row(b, c) + start;
                    for (int64_t i = 0; i < len; ++i) dst[i] += g[i];
                }
        };
    });
}

Var cumsum_x(const Var& a) {
    auto av = a.val;
    auto out = std::make_shared<Tensor3>(av->batch, av->channels, av->length);
    for (int64_t b = 0; b < av->batch; ++b)
        for (int64_t c = 0; c < av->channels; ++c) {
            const double* src = av->row(b, c);
            double* dst = out->row(b, c);
            double s = 0.0;
            for (int64_t i = 0; i < av->length; ++i) {
                s += src[i];
                dst[i] = s;
            }
        }
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (int64_t b = 0; b < av->batch; ++b)
                for (int64_t c = 0; c < av->channels; ++c) {
                    const double* g = go.row(b, c);
                    double* dst = ga.row(b, c);
                    double s = 0.0;
                    for (int64_t i = av->length - 1; i >= 0; --i) {
                        s += g[i];
                        dst[i] += s;
                    }
                }
        };
    });
}

Var avg_pool2(const Var& a) {
    const Tensor3& av = a.v();
    if (av.length % 2 != 0) throw ShapeError("avg_pool2 requires even length");
    int64_t lo = av.length / 2;
    auto out = std::make_shared<Tensor3>(av.batch, av.channels, lo);
    for (int64_t b = 0; b < av.batch; ++b)
        for (int64_t c = 0; c < av.channels; ++c) {
            const double* src = av.row(b, c);
            double* dst = out->row(b, c);
            for (int64_t i = 0; i < lo; ++i) dst[i] = 0.5 * (src[2 * i] + src[2 * i + 1]);
        }
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    auto avp = a.val;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (int64_t b = 0; b < avp->batch; ++b)
                for (int64_t c = 0; c < avp->channels; ++c) {
                    const double* g = go.row(b, c);
                    double* dst = ga.row(b, c);
                    for (int64_t i = 0; i < lo; ++i) {
                        dst[2 * i] += 0.5 * g[i];
                        dst[2 * i + 1] += 0.5 * g[i];
                    }
                }
        };
    });
}

Var upsample2(const Var& a) {
    const Tensor3& av = a.v();
    int64_t lo = av.length * 2;
    auto out = std::make_shared<Tensor3>(av.batch, av.channels, lo);
    for (int64_t b = 0; b < av.batch; ++b)
        for (int64_t c = 0; c < av.channels; ++c) {
            const double* src = av.row(b, c);
            double* dst = out->row(b, c);
            for (int64_t i = 0; i < av.length; ++i) {
                dst[2 * i] = src[i];
                dst[2 * i + 1] = src[i];
            }
        }
    Tape* tp = tape_of(a);
    if (!tp) return finish(out, nullptr, {});
    int an = a.node;
    auto avp = a.val;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& ga = t.grad(an);
            for (int64_t b = 0; b < avp->batch; ++b)
                for (int64_t c = 0; c < avp->channels; ++c) {
                    const double* g = go.row(b, c);
                    double* dst = ga.row(b, c);
                    for (int64_t i = 0; i < avp->length; ++i)
                        dst[i] += g[2 * i] + g[2 * i + 1];
                }
        };
    });
}

// ------------------------------------------------------------- convolutions

Var conv1d(const Var& x, const Var& weights, const Var& bias) {
    const Tensor3& xv = x.v();
    const Tensor3& wv = weights.v();
    const Tensor3& bv = bias.v();
    int64_t c_out = wv.batch, c_in = wv.channels, k = wv.length, L = xv.length;
    if (xv.channels != c_in)
        throw ShapeError("conv1d: input channels " + std::to_string(xv.channels) +
                         " != kernel C_in " + std::to_string(c_in));
    if (bv.channels != c_out || bv.batch != 1 || bv.length != 1)
        throw ShapeError("conv1d: bias must be (1,C_out,1)");
    int64_t pl = (k - 1) / 2;

    auto out = std::make_shared<Tensor3>(xv.batch, c_out, L);
    for (int64_t b = 0; b < xv.batch; ++b) {
        for (int64_t o = 0; o < c_out; ++o) {
            double* y = out->row(b, o);
            double bias_o = bv.at(0, o, 0);
            for (int64_t i = 0; i < L; ++i) y[i] = bias_o;
            for (int64_t c = 0; c < c_in; ++c) {
                const double* xr = xv.row(b, c);
                const double* wr = wv.row(o, c);
                for (int64_t j = 0; j < k; ++j) {
                    double w = wr[j];
                    int64_t off = j - pl;
                    int64_t i0 = std::max<int64_t>(0, -off);
                    int64_t i1 = std::min<int64_t>(L, L - off);
                    const double* xs = xr + off;
                    for (int64_t i = i0; i < i1; ++i) y[i] += w * xs[i];
                }
            }
        }
    }

    Tape* tp = tape_of(x, weights, bias);
    if (!tp) return finish(out, nullptr, {});
    auto xvp = x.val;
    auto wvp = weights.val;
    int xn = x.node, wn = weights.node, bn = bias.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            int64_t B = xvp->batch;
            if (xn >= 0) {
                Tensor3& gx = t.grad(xn);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < c_in; ++c) {
                        double* gxr = gx.row(b, c);
                        for (int64_t o = 0; o < c_out; ++o) {
                            const double* gor = go.row(b, o);
                            const double* wr = wvp->row(o, c);
                            for (int64_t j = 0; j < k; ++j) {
                                double w = wr[j];
                                int64_t off = j - pl;
                                // gx[i+off] += w * go[i]  ->  gx[s] += w * go[s-off]
                                int64_t s0 = std::max<int64_t>(0, off);
                                int64_t s1 = std::min<int64_t>(L, L + off);
                                const double* gs = gor - off;
                                for (int64_t s = s0; s < s1; ++s) gxr[s] += w * gs[s];
                            }
                        }
                    }
            }
            if (wn >= 0) {
                Tensor3& gw = t.grad(wn);
                for (int64_t o = 0; o < c_out; ++o)
                    for (int64_t c = 0; c < c_in; ++c) {
                        double* gwr = gw.row(o, c);
                        for (int64_t j = 0; j < k; ++j) {
                            int64_t off = j - pl;
                            int64_t i0 = std::max<int64_t>(0, -off);
                            int64_t i1 = std::min<int64_t>(L, L - off);
                            double s = 0.0;
                            for (int64_t b = 0; b < B; ++b) {
                                const double* gor = go.row(b, o);
                                const double* xs = xvp->row(b, c) + off;
                                for (int64_t i = i0; i < i1; ++i) s += gor[i] * xs[i];
                            }
                            gwr[j] += s;
                        }
                    }
            }
            if (bn >= 0) {
                Tensor3& gb = t.grad(bn);
                for (int64_t o = 0; o < c_out; ++o) {
                    double s = 0.0;
                    for (int64_t b = 0; b < B; ++b) {
                        const double* gor = go.row(b, o);
                        for (int64_t i = 0; i < L; ++i) s += gor[i];
                    }
                    gb.at(0, o, 0) += s;
                }
            }
        };
    });
}

Var conv_transpose1d(const Var& x, const Var& weights, const Var& bias) {
    const Tensor3& xv = x.v();
    const Tensor3& wv = weights.v();
    const Tensor3& bv = bias.v();
    int64_t c_in = wv.batch, c_out = wv.channels, k = wv.length, L = xv.length;
    if (xv.channels != c_in)
        throw ShapeError("conv_transpose1d: input channels " + std::to_string(xv.channels) +
                         " != kernel C_in " + std::to_string(c_in));
    if (bv.channels != c_out || bv.batch != 1 || bv.length != 1)
        throw ShapeError("conv_transpose1d: bias must be (1,C_out,1)");
    int64_t pl = (k - 1) / 2;

    auto out = std::make_shared<Tensor3>(xv.batch, c_out, L);
    for (int64_t b = 0; b < xv.batch; ++b) {
        for (int64_t o = 0; o < c_out; ++o) {
            double* y = out->row(b, o);
            double bias_o = bv.at(0, o, 0);
            for (int64_t i = 0; i < L; ++i) y[i] = bias_o;
            for (int64_t c = 0; c < c_in; ++c) {
                const double* xr = xv.row(b, c);
                const double* wr = wv.row(c, o);
                for (int64_t j = 0; j < k; ++j) {
                    double w = wr[j];
                    int64_t off = pl - j;  // y[t] += w * x[t+off]
                    int64_t t0 = std::max<int64_t>(0, -off);
                    int64_t t1 = std::min<int64_t>(L, L - off);
                    const double* xs = xr + off;
                    for (int64_t tt = t0; tt < t1; ++tt) y[tt] += w * xs[tt];
                }
            }
        }
    }

    Tape* tp = tape_of(x, weights, bias);
    if (!tp) return finish(out, nullptr, {});
    auto xvp = x.val;
    auto wvp = weights.val;
    int xn = x.node, wn = weights.node, bn = bias.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            int64_t B = xvp->batch;
            if (xn >= 0) {
                Tensor3& gx = t.grad(xn);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < c_in; ++c) {
                        double* gxr = gx.row(b, c);
                        for (int64_t o = 0; o < c_out; ++o) {
                            const double* gor = go.row(b, o);
                            const double* wr = wvp->row(c, o);
                            for (int64_t j = 0; j < k; ++j) {
                                double w = wr[j];
                                int64_t off = pl - j;
                                // y[t] += w*x[t+off]  ->  gx[s] += w*go[s-off]
                                int64_t s0 = std::max<int64_t>(0, off);
                                int64_t s1 = std::min<int64_t>(L, L + off);
                                const double* gs = gor - off;
                                for (int64_t s = s0; s < s1; ++s) gxr[s] += w * gs[s];
                            }
                        }
                    }
            }
            if (wn >= 0) {
                Tensor3& gw = t.grad(wn);
                for (int64_t c = 0; c < c_in; ++c)
                    for (int64_t o = 0; o < c_out; ++o) {
                        double* gwr = gw.row(c, o);
                        for (int64_t j = 0; j < k; ++j) {
                            int64_t off = pl - j;
                            int64_t t0 = std::max<int64_t>(0, -off);
                            int64_t t1 = std::min<int64_t>(L, L - off);
                            double s = 0.0;
                            for (int64_t b = 0; b < B; ++b) {
                                const double* gor = go.row(b, o);
                                const double* xs = xvp->row(b, c) + off;
                                for (int64_t tt = t0; tt < t1; ++tt) s += gor[tt] * xs[tt];
                            }
                            gwr[j] += s;
                        }
                    }
            }
            if (bn >= 0) {
                Tensor3& gb = t.grad(bn);
                for (int64_t o = 0; o < c_out; ++o) {
                    double s = 0.0;
                    for (int64_t b = 0; b < B; ++b) {
                        const double* gor = go.row(b, o);
                        for (int64_t i = 0; i < L; ++i) s += gor[i];
                    }
                    gb.at(0, o, 0) += s;
                }
            }
        };
    });
}

// ------------------------------------------------------------- batch norm

Var batch_norm1d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                 bool train, bool update_running, double eps, double momentum) {
    const Tensor3& xv = x.v();
    const Tensor3& gv = gamma.v();
    const Tensor3& bv = beta.v();
    int64_t C = xv.channels, B = xv.batch, L = xv.length;
    if (gv.channels != C || bv.channels != C)
        throw ShapeError("batch_norm1d: affine params must have " + std::to_string(C) +
                         " channels");
    int64_t n = B * L;
    auto mean = std::make_shared<std::vector<double>>(size_t(C));
    auto invstd = std::make_shared<std::vector<double>>(size_t(C));

    if (train) {
        if (n < 2) throw ContractError("batch_norm1d train mode requires batch*length >= 2");
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                const double* xr = xv.row(b, c);
                for (int64_t i = 0; i < L; ++i) s += xr[i];
            }
            double m = s / double(n);
            double v = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                const double* xr = xv.row(b, c);
                for (int64_t i = 0; i < L; ++i) {
                    double d = xr[i] - m;
                    v += d * d;
                }
            }
            v /= double(n);
            (*mean)[size_t(c)] = m;
            (*invstd)[size_t(c)] = 1.0 / std::sqrt(v + eps);
            if (update_running) {
                double unbiased = v * double(n) / double(n - 1);
                if (!state.initialized) {
                    state.running_mean[size_t(c)] = m;
                    state.running_var[size_t(c)] = unbiased;
                } else {
                    state.running_mean[size_t(c)] =
                        (1.0 - momentum) * state.running_mean[size_t(c)] + momentum * m;
                    state.running_var[size_t(c)] =
                        (1.0 - momentum) * state.running_var[size_t(c)] + momentum * unbiased;
                }
            }
        }
        if (update_running) state.initialized = true;
    } else {
        if (!state.initialized)
            throw StateError("batch_norm1d eval mode before any running-stat update");
        for (int64_t c = 0; c < C; ++c) {
            (*mean)[size_t(c)] = state.running_mean[size_t(c)];
            (*invstd)[size_t(c)] = 1.0 / std::sqrt(state.running_var[size_t(c)] + eps);
        }
    }

    auto out = std::make_shared<Tensor3>(B, C, L);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double* xr = xv.row(b, c);
            double* y = out->row(b, c);
            double m = (*mean)[size_t(c)], is = (*invstd)[size_t(c)];
            double g = gv.at(0, c, 0), bb = bv.at(0, c, 0);
            for (int64_t i = 0; i < L; ++i) y[i] = g * (xr[i] - m) * is + bb;
        }

    Tape* tp = tape_of(x, gamma, beta);
    if (!tp) return finish(out, nullptr, {});
    auto xvp = x.val;
    auto gvp = gamma.val;
    int xn = x.node, gn = gamma.node, bn = beta.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            for (int64_t c = 0; c < C; ++c) {
                double m = (*mean)[size_t(c)], is = (*invstd)[size_t(c)];
                double g = gvp->at(0, c, 0);
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const double* gor = go.row(b, c);
                    const double* xr = xvp->row(b, c);
                    for (int64_t i = 0; i < L; ++i) {
                        sum_dy += gor[i];
                        sum_dy_xhat += gor[i] * (xr[i] - m) * is;
                    }
                }
                if (xn >= 0) {
                    Tensor3& gx = t.grad(xn);
                    if (train) {
                        double mdy = sum_dy / double(n);
                        double mdyx = sum_dy_xhat / double(n);
                        for (int64_t b = 0; b < B; ++b) {
                            const double* gor = go.row(b, c);
                            const double* xr = xvp->row(b, c);
                            double* gxr = gx.row(b, c);
                            for (int64_t i = 0; i < L; ++i) {
                                double xhat = (xr[i] - m) * is;
                                gxr[i] += g * is * (gor[i] - mdy - xhat * mdyx);
                            }
                        }
                    } else {
                        for (int64_t b = 0; b < B; ++b) {
                            const double* gor = go.row(b, c);
                            double* gxr = gx.row(b, c);
                            for (int64_t i = 0; i < L; ++i) gxr[i] += g * is * gor[i];
                        }
                    }
                }
                if (gn >= 0) t.grad(gn).at(0, c, 0) += sum_dy_xhat;
                if (bn >= 0) t.grad(bn).at(0, c, 0) += sum_dy;
            }
        };
    });
}

// ---------------------------------------------------- statistical primitives

Var soft_histogram(const Var& x, int nbins, double range, double bandwidth) {
    if (nbins < 2) throw ContractError("soft_histogram requires nbins >= 2");
    if (bandwidth <= 0.0) throw ContractError("soft_histogram requires bandwidth > 0");
    auto xvp = x.val;
    size_t nsamp = xvp->data.size();
    double binw = 2.0 * range / double(nbins);
    double c0 = -range + 0.5 * binw;
    double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    // kernel support truncated at 8 bandwidths
    int halo = int(std::ceil(8.0 * bandwidth / binw));

    auto w = std::make_shared<std::vector<double>>(size_t(nbins), 0.0);
    for (size_t i = 0; i < nsamp; ++i) {
        double xi = xvp->data[i];
        int jc = int(std::floor((xi - (-range)) / binw));
        int j0 = std::max(0, jc - halo), j1 = std::min(nbins - 1, jc + halo);
        for (int j = j0; j <= j1; ++j) {
            double d = xi - (c0 + j * binw);
            (*w)[size_t(j)] += std::exp(-d * d * inv2h2);
        }
    }
    double wsum = 0.0;
    for (double v : *w) wsum += v;
    if (wsum <= 0.0) throw DegenerateStatsError("soft_histogram: no mass inside range");

    auto out = std::make_shared<Tensor3>(1, 1, nbins);
    for (int j = 0; j < nbins; ++j) out->data[size_t(j)] = (*w)[size_t(j)] / wsum;

    Tape* tp = tape_of(x);
    if (!tp) return finish(out, nullptr, {});
    int xn = x.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            const Tensor3& go = t.grad(on);
            Tensor3& gx = t.grad(xn);
            double gdotw = 0.0;
            for (int j = 0; j < nbins; ++j) gdotw += go.data[size_t(j)] * (*w)[size_t(j)];
            double A = gdotw / (wsum * wsum);
            for (size_t i = 0; i < nsamp; ++i) {
                double xi = xvp->data[i];
                int jc = int(std::floor((xi - (-range)) / binw));
                int j0 = std::max(0, jc - halo), j1 = std::min(nbins - 1, jc + halo);
                double acc = 0.0;
                for (int j = j0; j <= j1; ++j) {
                    double cj = c0 + j * binw;
                    double d = xi - cj;
                    double kij = std::exp(-d * d * inv2h2);
                    double dk = kij * (cj - xi) * 2.0 * inv2h2;  // dk/dx_i
                    acc += (go.data[size_t(j)] / wsum - A) * dk;
                }
                gx.data[i] += acc;
            }
        };
    });
}

Var kl_divergence_var(const Var& p, const std::vector<double>& q, double eps_floor) {
    auto pv = p.val;
    size_t n = pv->data.size();
    if (q.size() != n) throw ContractError("kl_divergence: p and q length mismatch");
    for (size_t i = 0; i < n; ++i) {
        if (pv->data[i] < 0.0 || q[i] < 0.0)
            throw ContractError("kl_divergence: negative entries");
    }
    auto qf = std::make_shared<std::vector<double>>(q);
    for (double& v : *qf) v = std::max(v, eps_floor);
    double kl = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double pi = pv->data[i];
        if (pi > 0.0) kl += pi * std::log(pi / (*qf)[i]);
    }
    auto out = std::make_shared<Tensor3>(Tensor3::scalar(kl));
    Tape* tp = tape_of(p);
    if (!tp) return finish(out, nullptr, {});
    int pn = p.node;
    return finish(out, tp, [=](int on) {
        return [=](Tape& t) {
            if (!t.touched(on)) return;
            double g = t.grad(on).data[0];
            Tensor3& gp = t.grad(pn);
            for (size_t i = 0; i < n; ++i) {
                double pi = pv->data[i];
                if (pi > 0.0) gp.data[i] += g * (std::log(pi / (*qf)[i]) + 1.0);
            }
        };
    });
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double eps_floor) {
    if (p.size() != q.size()) throw ContractError("kl_divergence: length mismatch");
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw ContractError("kl_divergence: negative entries");
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], eps_floor));
    }
    return kl;
}

std::vector<double> gaussian_bin_masses(int nbins, double range) {
    std::vector<double> q(static_cast<size_t>(nbins), 0.0);
    double binw = 2.0 * range / double(nbins);
    auto Phi = [](double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); };
    for (int j = 0; j < nbins; ++j) {
        double a = -range + j * binw;
        q[size_t(j)] = Phi(a + binw) - Phi(a);
    }
    return q;
}

}  // namespace turbstoch
