#include "ipnmt/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ipnmt/errors.hpp"
#include "ipnmt/nn/kernels.hpp"

namespace ipnmt::nn {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_to_string(a) + " and " + shape_to_string(b));
}

Tape& same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw PreconditionError("op arguments recorded on different tapes");
  }
  return *a.tape();
}

bool any_requires(Tape& t, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (t.requires_grad(v.id())) return true;
  }
  return false;
}

void require_vector(const char* op, const Tensor& t) {
  if (t.rank() != 1 || t.size() == 0) {
    throw DimensionError(std::string(op) + ": expected non-empty vector, got " +
                         shape_to_string(t.shape()));
  }
}

}  // namespace

// --- fn ---------------------------------------------------------------------

namespace fn {

void affine(std::span<const double> x, const Tensor& weight,
            std::span<const double> bias, std::span<double> y) {
  std::copy(bias.begin(), bias.end(), y.begin());
  kernels::vec_mat(x, weight.values(), y);
}

double log_sum_exp(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (double z : logits) acc += std::exp(z - mx);
  return mx + std::log(acc);
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& p : out) p /= total;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void lstm_cell(std::span<const double> z, std::span<const double> c,
               std::span<double> gates, std::span<double> h_next,
               std::span<double> c_next, std::span<double> tanh_c) {
  const std::size_t n = c.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double i = sigmoid(z[k]);
    const double f = sigmoid(z[n + k]);
    const double g = std::tanh(z[2 * n + k]);
    const double o = sigmoid(z[3 * n + k]);
    gates[k] = i;
    gates[n + k] = f;
    gates[2 * n + k] = g;
    gates[3 * n + k] = o;
    c_next[k] = f * c[k] + i * g;
    tanh_c[k] = std::tanh(c_next[k]);
    h_next[k] = o * tanh_c[k];
  }
}

void attention(std::span<const double> query, const Tensor& states,
               const Tensor& weight, std::span<double> projected,
               std::span<double> weights, std::span<double> context) {
  const std::size_t n = states.rows();
  const std::size_t d = states.cols();
  std::fill(projected.begin(), projected.end(), 0.0);
  kernels::vec_mat(query, weight.values(), projected);
  std::vector<double> scores(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto s = states.row(j);
    double acc = 0.0;
    for (std::size_t b = 0; b < d; ++b) acc += projected[b] * s[b];
    scores[j] = acc;
  }
  softmax(scores, weights);
  std::fill(context.begin(), context.end(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    kernels::serial::axpy(weights[j], states.row(j), context);
  }
}

}  // namespace fn

// --- tape ops -------------------------------------------------------------

Var affine(Var input, Var weight, Var bias) {
  Tape& t = same_tape(input, weight);
  same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (w.rank() != 2) shape_error("affine", x.shape(), w.shape());
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  if (b.size() != out || b.rank() != 1) shape_error("affine (bias)", w.shape(), b.shape());
  const bool batched = x.rank() == 2;
  if ((x.rank() != 1 && !batched) || (batched ? x.cols() : x.size()) != in) {
    shape_error("affine", x.shape(), w.shape());
  }
  const std::size_t m = batched ? x.rows() : 1;
  Tensor y(batched ? Shape{m, out} : Shape{out});
  for (std::size_t r = 0; r < m; ++r) {
    auto xr = x.values().subspan(r * in, in);
    auto yr = y.values().subspan(r * out, out);
    fn::affine(xr, w, b.values(), yr);
  }
  require_finite(y.values(), "affine");
  const std::size_t xi = input.id(), wi = weight.id(), bi = bias.id();
  return t.record(std::move(y), any_requires(t, {input, weight, bias}),
                  [xi, wi, bi, m, in, out](Tape& tape, std::size_t self) {
                    const Tensor& g = tape.grad(self);
                    const Tensor& xv = tape.value(xi);
                    const Tensor& wv = tape.value(wi);
                    for (std::size_t r = 0; r < m; ++r) {
                      auto gr = g.values().subspan(r * out, out);
                      auto xr = xv.values().subspan(r * in, in);
                      if (tape.requires_grad(xi)) {
                        kernels::mat_vec(wv.values(), gr,
                                         tape.grad(xi).values().subspan(r * in, in));
                      }
                      if (tape.requires_grad(wi)) {
                        kernels::outer_add(xr, gr, tape.grad(wi).values());
                      }
                      if (tape.requires_grad(bi)) {
                        kernels::serial::axpy(1.0, gr, tape.grad(bi).values());
                      }
                    }
                  });
}

Var softmax(Var logits) {
  Tape& t = *logits.tape();
  const Tensor& z = logits.value();
  require_vector("softmax", z);
  Tensor y(z.shape());
  fn::softmax(z.values(), y.values());
  const std::size_t zi = logits.id();
  return t.record(std::move(y), t.requires_grad(zi), [zi](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& p = tape.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += g[i] * p[i];
    Tensor& dz = tape.grad(zi);
    for (std::size_t i = 0; i < p.size(); ++i) dz[i] += p[i] * (g[i] - dot);
  });
}

Var log_softmax(Var logits) {
  Tape& t = *logits.tape();
  const Tensor& z = logits.value();
  require_vector("log_softmax", z);
  const double lse = fn::log_sum_exp(z.values());
  Tensor y(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) y[i] = z[i] - lse;
  require_finite(y.values(), "log_softmax");
  const std::size_t zi = logits.id();
  return t.record(std::move(y), t.requires_grad(zi), [zi](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& ly = tape.value(self);
    double total = 0.0;
    for (double gi : g.values()) total += gi;
    Tensor& dz = tape.grad(zi);
    for (std::size_t i = 0; i < ly.size(); ++i) dz[i] += g[i] - std::exp(ly[i]) * total;
  });
}

Var log_softmax_pick(Var logits, std::size_t index) {
  Tape& t = *logits.tape();
  const Tensor& z = logits.value();
  require_vector("log_softmax_pick", z);
  if (index >= z.size()) {
    throw DimensionError("log_softmax_pick: index " + std::to_string(index) +
                         " out of range for " + shape_to_string(z.shape()));
  }
  const double lse = fn::log_sum_exp(z.values());
  Tensor y({1}, z[index] - lse);
  require_finite(y.values(), "log_softmax_pick");
  const std::size_t zi = logits.id();
  return t.record(std::move(y), t.requires_grad(zi),
                  [zi, index, lse](Tape& tape, std::size_t self) {
                    const double g = tape.grad(self)[0];
                    const Tensor& zv = tape.value(zi);
                    Tensor& dz = tape.grad(zi);
                    for (std::size_t i = 0; i < zv.size(); ++i) {
                      dz[i] -= g * std::exp(zv[i] - lse);
                    }
                    dz[index] += g;
                  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) shape_error("add", x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), any_requires(t, {a, b}), [ai, bi](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    if (tape.requires_grad(ai)) kernels::serial::axpy(1.0, g.values(), tape.grad(ai).values());
    if (tape.requires_grad(bi)) kernels::serial::axpy(1.0, g.values(), tape.grad(bi).values());
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) shape_error("mul", x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), any_requires(t, {a, b}), [ai, bi](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& xv = tape.value(ai);
    const Tensor& yv = tape.value(bi);
    if (tape.requires_grad(ai)) {
      Tensor& dx = tape.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * yv[i];
    }
    if (tape.requires_grad(bi)) {
      Tensor& dy = tape.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) dy[i] += g[i] * xv[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  require_finite(out.values(), "scale");
  const std::size_t ai = a.id();
  return t.record(std::move(out), t.requires_grad(ai), [ai, factor](Tape& tape, std::size_t self) {
    kernels::serial::axpy(factor, tape.grad(self).values(), tape.grad(ai).values());
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  const std::size_t ai = a.id();
  return t.record(std::move(out), t.requires_grad(ai), [ai](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    Tensor& dx = tape.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) v = fn::sigmoid(v);
  const std::size_t ai = a.id();
  return t.record(std::move(out), t.requires_grad(ai), [ai](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    Tensor& dx = tape.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw PreconditionError("concat: no inputs");
  Tape& t = *parts.front().tape();
  std::size_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    if (p.tape() != &t) throw PreconditionError("concat: inputs on different tapes");
    if (p.value().rank() != 1) {
      throw DimensionError("concat: expected vectors, got " + shape_to_string(p.value().shape()));
    }
    total += p.value().size();
    needs = needs || t.requires_grad(p.id());
  }
  Tensor out({total});
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  std::size_t off = 0;
  for (Var p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
    ids.push_back(p.id());
  }
  return t.record(std::move(out), needs, [ids = std::move(ids)](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t n = tape.value(id).size();
      if (tape.requires_grad(id)) {
        kernels::serial::axpy(1.0, g.values().subspan(offset, n), tape.grad(id).values());
      }
      offset += n;
    }
  });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  if (x.rank() != 1 || offset + length > x.size()) {
    throw DimensionError("slice [" + std::to_string(offset) + ", +" +
                         std::to_string(length) + ") of " + shape_to_string(x.shape()));
  }
  Tensor out = Tensor::vector(x.values().subspan(offset, length));
  const std::size_t ai = a.id();
  return t.record(std::move(out), t.requires_grad(ai),
                  [ai, offset, length](Tape& tape, std::size_t self) {
                    kernels::serial::axpy(1.0, tape.grad(self).values(),
                                          tape.grad(ai).values().subspan(offset, length));
                  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw PreconditionError("stack_rows: no inputs");
  Tape& t = *rows.front().tape();
  const std::size_t d = rows.front().value().size();
  bool needs = false;
  std::vector<std::size_t> ids;
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = rows[r].value();
    if (v.rank() != 1 || v.size() != d) {
      shape_error("stack_rows", rows.front().value().shape(), v.shape());
    }
    std::copy(v.values().begin(), v.values().end(), out.row(r).begin());
    needs = needs || t.requires_grad(rows[r].id());
    ids.push_back(rows[r].id());
  }
  return t.record(std::move(out), needs, [ids = std::move(ids)](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (tape.requires_grad(ids[r])) {
        kernels::serial::axpy(1.0, g.row(r), tape.grad(ids[r]).values());
      }
    }
  });
}

Var row(Var matrix, std::size_t index) {
  Tape& t = *matrix.tape();
  const Tensor& m = matrix.value();
  if (m.rank() != 2 || index >= m.rows()) {
    throw DimensionError("row " + std::to_string(index) + " of " + shape_to_string(m.shape()));
  }
  Tensor out = Tensor::vector(m.row(index));
  const std::size_t mi = matrix.id();
  return t.record(std::move(out), t.requires_grad(mi), [mi, index](Tape& tape, std::size_t self) {
    kernels::serial::axpy(1.0, tape.grad(self).values(), tape.grad(mi).row(index));
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::size_t ai = a.id();
  return t.record(Tensor({1}, total), t.requires_grad(ai), [ai](Tape& tape, std::size_t self) {
    const double g = tape.grad(self)[0];
    for (double& d : tape.grad(ai).values()) d += g;
  });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const double> coefficients) {
  if (scalars.empty() || scalars.size() != coefficients.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(scalars.size()) + " terms, " +
                         std::to_string(coefficients.size()) + " coefficients");
  }
  Tape& t = *scalars.front().tape();
  double total = 0.0;
  bool needs = false;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1) {
      throw DimensionError("weighted_sum: term is not scalar: " +
                           shape_to_string(scalars[i].value().shape()));
    }
    total += coefficients[i] * scalars[i].value()[0];
    needs = needs || t.requires_grad(scalars[i].id());
    ids.push_back(scalars[i].id());
  }
  require_finite(std::span<const double>(&total, 1), "weighted_sum");
  std::vector<double> coef(coefficients.begin(), coefficients.end());
  return t.record(Tensor({1}, total), needs,
                  [ids = std::move(ids), coef = std::move(coef)](Tape& tape, std::size_t self) {
                    const double g = tape.grad(self)[0];
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      if (tape.requires_grad(ids[i])) tape.grad(ids[i])[0] += g * coef[i];
                    }
                  });
}

LstmOutput lstm_step(Var x, Var h, Var c, const LstmWeights& weights) {
  Tape& t = same_tape(x, h);
  same_tape(x, c);
  const std::size_t hidden = h.value().size();
  const Tensor& w = weights.weight.value();
  if (c.value().size() != hidden || c.value().rank() != 1 || h.value().rank() != 1) {
    shape_error("lstm_step (h, c)", h.value().shape(), c.value().shape());
  }
  if (w.rank() != 2 || w.cols() != 4 * hidden ||
      w.rows() != x.value().size() + hidden) {
    shape_error("lstm_step (weights)", Shape{x.value().size() + hidden, 4 * hidden}, w.shape());
  }
  const Var xh_parts[] = {x, h};
  Var z = affine(concat(xh_parts), weights.weight, weights.bias);

  std::vector<double> gates(4 * hidden), tanh_c(hidden);
  Tensor h_next({hidden}), c_next({hidden});
  fn::lstm_cell(z.value().values(), c.value().values(), gates, h_next.values(),
                c_next.values(), tanh_c);
  require_finite(h_next.values(), "lstm_step");
  require_finite(c_next.values(), "lstm_step");

  const bool needs = any_requires(t, {z, c});
  const std::size_t zi = z.id(), ci = c.id();
  Var c_var = t.record(std::move(c_next), needs,
                       [zi, ci, hidden, gates](Tape& tape, std::size_t self) {
                         const Tensor& g = tape.grad(self);
                         const Tensor& c_prev = tape.value(ci);
                         if (tape.requires_grad(zi)) {
                           Tensor& dz = tape.grad(zi);
                           for (std::size_t k = 0; k < hidden; ++k) {
                             const double i = gates[k], f = gates[hidden + k];
                             const double gg = gates[2 * hidden + k];
                             dz[k] += g[k] * gg * i * (1.0 - i);
                             dz[hidden + k] += g[k] * c_prev[k] * f * (1.0 - f);
                             dz[2 * hidden + k] += g[k] * i * (1.0 - gg * gg);
                           }
                         }
                         if (tape.requires_grad(ci)) {
                           Tensor& dc = tape.grad(ci);
                           for (std::size_t k = 0; k < hidden; ++k) dc[k] += g[k] * gates[hidden + k];
                         }
                       });
  const std::size_t cn = c_var.id();
  std::vector<double> out_gate(gates.begin() + 3 * static_cast<std::ptrdiff_t>(hidden), gates.end());
  Var h_var = t.record(std::move(h_next), needs,
                       [zi, cn, hidden, out_gate = std::move(out_gate),
                        tanh_c = std::move(tanh_c)](Tape& tape, std::size_t self) {
                         const Tensor& g = tape.grad(self);
                         if (tape.requires_grad(zi)) {
                           Tensor& dz = tape.grad(zi);
                           for (std::size_t k = 0; k < hidden; ++k) {
                             const double o = out_gate[k];
                             dz[3 * hidden + k] += g[k] * tanh_c[k] * o * (1.0 - o);
                           }
                         }
                         Tensor& dc = tape.grad(cn);
                         for (std::size_t k = 0; k < hidden; ++k) {
                           dc[k] += g[k] * out_gate[k] * (1.0 - tanh_c[k] * tanh_c[k]);
                         }
                       });
  return {h_var, c_var};
}

AttentionOutput global_attention(Var query, Var states, Var weight) {
  Tape& t = same_tape(query, states);
  same_tape(query, weight);
  const Tensor& q = query.value();
  const Tensor& s = states.value();
  const Tensor& w = weight.value();
  if (s.rank() != 2 || s.rows() == 0) {
    throw PreconditionError("global_attention: need at least one encoder state, got " +
                            shape_to_string(s.shape()));
  }
  if (q.rank() != 1 || w.rank() != 2 || w.rows() != q.size() || w.cols() != s.cols()) {
    shape_error("global_attention", q.shape(), w.shape());
  }
  const std::size_t n = s.rows();
  const std::size_t d = s.cols();
  std::vector<double> projected(d);
  Tensor weights({n});
  Tensor context({d});
  fn::attention(q.values(), s, w, projected, weights.values(), context.values());
  require_finite(context.values(), "global_attention");

  const bool needs = any_requires(t, {query, states, weight});
  const std::size_t qi = query.id(), si = states.id(), wi = weight.id();
  Var weights_var = t.record(
      std::move(weights), needs,
      [qi, si, wi, n, d, projected = std::move(projected)](Tape& tape, std::size_t self) {
        const Tensor& dw = tape.grad(self);
        const Tensor& a = tape.value(self);
        const Tensor& sv = tape.value(si);
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += a[j] * dw[j];
        std::vector<double> dscore(n);
        for (std::size_t j = 0; j < n; ++j) dscore[j] = a[j] * (dw[j] - dot);
        if (tape.requires_grad(si)) {
          Tensor& ds = tape.grad(si);
          for (std::size_t j = 0; j < n; ++j) kernels::serial::axpy(dscore[j], projected, ds.row(j));
        }
        if (tape.requires_grad(qi) || tape.requires_grad(wi)) {
          std::vector<double> dproj(d, 0.0);
          for (std::size_t j = 0; j < n; ++j) kernels::serial::axpy(dscore[j], sv.row(j), dproj);
          if (tape.requires_grad(qi)) {
            kernels::mat_vec(tape.value(wi).values(), dproj, tape.grad(qi).values());
          }
          if (tape.requires_grad(wi)) {
            kernels::outer_add(tape.value(qi).values(), dproj, tape.grad(wi).values());
          }
        }
      });
  const std::size_t ai = weights_var.id();
  Var context_var = t.record(std::move(context), needs,
                             [ai, si, n](Tape& tape, std::size_t self) {
                               const Tensor& g = tape.grad(self);
                               const Tensor& sv = tape.value(si);
                               const Tensor& a = tape.value(ai);
                               Tensor& da = tape.grad(ai);
                               for (std::size_t j = 0; j < n; ++j) {
                                 double acc = 0.0;
                                 const auto sj = sv.row(j);
                                 for (std::size_t b = 0; b < sj.size(); ++b) acc += g[b] * sj[b];
                                 da[j] += acc;
                               }
                               if (tape.requires_grad(si)) {
                                 Tensor& ds = tape.grad(si);
                                 for (std::size_t j = 0; j < n; ++j) {
                                   kernels::serial::axpy(a[j], g.values(), ds.row(j));
                                 }
                               }
                             });
  return {context_var, weights_var};
}

}  // namespace ipnmt::nn
