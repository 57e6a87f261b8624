#include "b2s/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "b2s/errors.hpp"

namespace b2s::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

bool finite(const Matrix& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](double x) { return std::isfinite(x); });
}

using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

RowMap map(Matrix& m) { return RowMap(m.data.data(), m.rows, m.cols); }
ConstRowMap map(const Matrix& m) { return ConstRowMap(m.data.data(), m.rows, m.cols); }

void require(bool ok, const std::string& what) {
  if (!ok) throw IntegrityError(what);
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, std::string name, std::function<void(Tape&, int)> backward) {
  if (!finite(value)) throw NumericError("non-finite values in tensor '" + name + "'");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value, bool requires_grad, std::string name) {
  return push(std::move(value), requires_grad, std::move(name), nullptr);
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::backward(Var root, double scale) {
  const Matrix& v = value(root);
  require(v.rows == 1 && v.cols == 1, "backward root must be a scalar");
  for (auto& n : nodes_) n.grad = Matrix();
  grad_ref(root.id).data[0] = scale;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (!finite(n.grad)) throw NumericError("non-finite gradient in tensor '" + n.name + "'");
    if (n.backward) n.backward(*this, id);
  }
}

Var Tape::matmul(Var a, Var b, const std::string& name) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols == B.rows, name + ": inner dimensions differ");
  Matrix C(A.rows, B.cols);
  map(C).noalias() = map(A) * map(B);
  return push(std::move(C), needs(a) || needs(b), name, [a, b](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    if (t.needs(a)) map(t.grad_ref(a.id)).noalias() += map(G) * map(t.value(b)).transpose();
    if (t.needs(b)) map(t.grad_ref(b.id)).noalias() += map(t.value(a)).transpose() * map(G);
  });
}

Var Tape::add_bias(Var x, Var bias, const std::string& name) {
  const Matrix& X = value(x);
  const Matrix& b = value(bias);
  require(b.rows == 1 && b.cols == X.cols, name + ": bias shape mismatch");
  Matrix Y = X;
  for (int i = 0; i < Y.rows; ++i) {
    double* y = Y.row(i);
    for (int j = 0; j < Y.cols; ++j) y[j] += b.data[static_cast<std::size_t>(j)];
  }
  return push(std::move(Y), needs(x) || needs(bias), name, [x, bias](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    if (t.needs(x)) {
      Matrix& dx = t.grad_ref(x.id);
      for (std::size_t i = 0; i < G.size(); ++i) dx.data[i] += G.data[i];
    }
    if (t.needs(bias)) {
      Matrix& db = t.grad_ref(bias.id);
      for (int i = 0; i < G.rows; ++i) {
        const double* g = G.row(i);
        for (int j = 0; j < G.cols; ++j) db.data[static_cast<std::size_t>(j)] += g[j];
      }
    }
  });
}

Var Tape::add(Var a, Var b, const std::string& name) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows == B.rows && A.cols == B.cols, name + ": shape mismatch");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  return push(std::move(C), needs(a) || needs(b), name, [a, b](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    for (Var v : {a, b}) {
      if (!t.needs(v)) continue;
      Matrix& d = t.grad_ref(v.id);
      for (std::size_t i = 0; i < G.size(); ++i) d.data[i] += G.data[i];
    }
  });
}

Var Tape::scale(Var x, double s, const std::string& name) {
  Matrix Y = value(x);
  for (double& y : Y.data) y *= s;
  return push(std::move(Y), needs(x), name, [x, s](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    Matrix& d = t.grad_ref(x.id);
    for (std::size_t i = 0; i < G.size(); ++i) d.data[i] += s * G.data[i];
  });
}

Var Tape::gelu(Var x, const std::string& name) {
  Matrix Y = value(x);
  for (double& y : Y.data) {
    const double v = y;
    y = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return push(std::move(Y), needs(x), name, [x](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    const Matrix& X = t.value(x);
    Matrix& d = t.grad_ref(x.id);
    for (std::size_t i = 0; i < G.size(); ++i) {
      const double v = X.data[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double dv = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      d.data[i] += G.data[i] * dv;
    }
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, const std::string& name) {
  const Matrix& X = value(x);
  const Matrix& g = value(gamma);
  const Matrix& b = value(beta);
  require(g.rows == 1 && g.cols == X.cols && b.rows == 1 && b.cols == X.cols, name + ": affine shape mismatch");
  const int n = X.cols;
  Matrix Y(X.rows, n);
  Matrix xhat(X.rows, n);
  std::vector<double> inv(static_cast<std::size_t>(X.rows));
  for (int i = 0; i < X.rows; ++i) {
    const double* xr = X.row(i);
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat(i, j) = h;
      Y(i, j) = h * g.data[static_cast<std::size_t>(j)] + b.data[static_cast<std::size_t>(j)];
    }
  }
  return push(std::move(Y), needs(x) || needs(gamma) || needs(beta), name,
              [x, gamma, beta, xhat = std::move(xhat), inv = std::move(inv)](Tape& t, int self) {
                const Matrix& G = t.grad_ref(self);
                const Matrix& g = t.value(gamma);
                const int n = G.cols;
                if (t.needs(gamma) || t.needs(beta)) {
                  Matrix* dg = t.needs(gamma) ? &t.grad_ref(gamma.id) : nullptr;
                  Matrix* db = t.needs(beta) ? &t.grad_ref(beta.id) : nullptr;
                  for (int i = 0; i < G.rows; ++i) {
                    for (int j = 0; j < n; ++j) {
                      if (dg) dg->data[static_cast<std::size_t>(j)] += G(i, j) * xhat(i, j);
                      if (db) db->data[static_cast<std::size_t>(j)] += G(i, j);
                    }
                  }
                }
                if (!t.needs(x)) return;
                Matrix& dx = t.grad_ref(x.id);
                std::vector<double> dh(static_cast<std::size_t>(n));
                for (int i = 0; i < G.rows; ++i) {
                  double m1 = 0.0, m2 = 0.0;
                  for (int j = 0; j < n; ++j) {
                    dh[static_cast<std::size_t>(j)] = G(i, j) * g.data[static_cast<std::size_t>(j)];
                    m1 += dh[static_cast<std::size_t>(j)];
                    m2 += dh[static_cast<std::size_t>(j)] * xhat(i, j);
                  }
                  m1 /= n;
                  m2 /= n;
                  const double is = inv[static_cast<std::size_t>(i)];
                  for (int j = 0; j < n; ++j) dx(i, j) += is * (dh[static_cast<std::size_t>(j)] - m1 - xhat(i, j) * m2);
                }
              });
}

Var Tape::mask_rows(Var x, const std::vector<double>& mask, const std::string& name) {
  Matrix Y = value(x);
  require(static_cast<int>(mask.size()) == Y.rows, name + ": mask length mismatch");
  for (int i = 0; i < Y.rows; ++i) {
    double* y = Y.row(i);
    for (int j = 0; j < Y.cols; ++j) y[j] *= mask[static_cast<std::size_t>(i)];
  }
  return push(std::move(Y), needs(x), name, [x, mask](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    Matrix& d = t.grad_ref(x.id);
    for (int i = 0; i < G.rows; ++i) {
      const double m = mask[static_cast<std::size_t>(i)];
      if (m == 0.0) continue;
      for (int j = 0; j < G.cols; ++j) d(i, j) += m * G(i, j);
    }
  });
}

Var Tape::gather_rows(Var x, const std::vector<int>& index, const std::string& name) {
  const Matrix& X = value(x);
  Matrix Y(static_cast<int>(index.size()), X.cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < X.rows, name + ": row index out of range");
    std::copy(X.row(index[r]), X.row(index[r]) + X.cols, Y.row(static_cast<int>(r)));
  }
  return push(std::move(Y), needs(x), name, [x, index](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    Matrix& d = t.grad_ref(x.id);
    for (std::size_t r = 0; r < index.size(); ++r) {
      const double* g = G.row(static_cast<int>(r));
      double* dr = d.row(index[r]);
      for (int j = 0; j < G.cols; ++j) dr[j] += g[j];
    }
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts, const std::string& name) {
  require(!parts.empty(), name + ": nothing to concatenate");
  const int cols = value(parts[0]).cols;
  int rows = 0;
  bool any = false;
  for (Var p : parts) {
    require(value(p).cols == cols, name + ": column mismatch");
    rows += value(p).rows;
    any = any || needs(p);
  }
  Matrix Y(rows, cols);
  int at = 0;
  for (Var p : parts) {
    const Matrix& P = value(p);
    std::copy(P.data.begin(), P.data.end(), Y.row(at));
    at += P.rows;
  }
  return push(std::move(Y), any, name, [parts](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    int at = 0;
    for (Var p : parts) {
      const int r = t.value(p).rows;
      if (t.needs(p)) {
        Matrix& d = t.grad_ref(p.id);
        for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += G.row(at)[i];
      }
      at += r;
    }
  });
}

Var Tape::mean_rows(Var x, const std::vector<std::vector<int>>& groups, const std::string& name) {
  const Matrix& X = value(x);
  Matrix Y(static_cast<int>(groups.size()), X.cols);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(!groups[g].empty(), name + ": empty group");
    double* y = Y.row(static_cast<int>(g));
    for (int r : groups[g]) {
      require(r >= 0 && r < X.rows, name + ": row index out of range");
      for (int j = 0; j < X.cols; ++j) y[j] += X(r, j);
    }
    for (int j = 0; j < X.cols; ++j) y[j] /= static_cast<double>(groups[g].size());
  }
  return push(std::move(Y), needs(x), name, [x, groups](Tape& t, int self) {
    const Matrix& G = t.grad_ref(self);
    Matrix& d = t.grad_ref(x.id);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double w = 1.0 / static_cast<double>(groups[g].size());
      for (int r : groups[g]) {
        for (int j = 0; j < G.cols; ++j) d(r, j) += w * G(static_cast<int>(g), j);
      }
    }
  });
}

Var Tape::attention(Var q, Var k, Var v, int heads, const AttentionLayout& layout, Var bias, const std::string& name) {
  const Matrix& Q = value(q);
  const Matrix& K = value(k);
  const Matrix& V = value(v);
  const int n = Q.rows;
  const int C = Q.cols;
  require(heads >= 1 && C % heads == 0, name + ": width not divisible by heads");
  require(K.rows == V.rows && K.cols == C && V.cols == C, name + ": key/value shape mismatch");
  require(static_cast<int>(layout.keys.size()) == n, name + ": layout size mismatch");
  const bool has_bias = bias.valid();
  if (has_bias) require(value(bias).cols == heads, name + ": bias must have one column per head");
  require(layout.bias.empty() || static_cast<int>(layout.bias.size()) == n, name + ": bias layout size mismatch");
  const int dh = C / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[i] holds heads x |keys[i]| softmax weights.
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(n));
  Matrix O(n, C);
  for (int i = 0; i < n; ++i) {
    const auto& keys = layout.keys[static_cast<std::size_t>(i)];
    const std::size_t nk = keys.size();
    require(nk > 0, name + ": query without keys");
    auto& p = probs[static_cast<std::size_t>(i)];
    p.assign(static_cast<std::size_t>(heads) * nk, 0.0);
    for (int h = 0; h < heads; ++h) {
      double* s = p.data() + static_cast<std::size_t>(h) * nk;
      const double* qi = Q.row(i) + h * dh;
      for (std::size_t a = 0; a < nk; ++a) {
        const int j = keys[a];
        require(j >= 0 && j < K.rows, name + ": key index out of range");
        const double* kj = K.row(j) + h * dh;
        double dot = 0.0;
        for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
        s[a] = dot * inv;
      }
      if (has_bias && !layout.bias.empty()) {
        const Matrix& B = value(bias);
        for (const auto& [pos, r] : layout.bias[static_cast<std::size_t>(i)]) {
          require(r >= 0 && r < B.rows, name + ": bias row out of range");
          s[pos] += B(r, h);
        }
      }
      const double mx = *std::max_element(s, s + nk);
      double z = 0.0;
      for (std::size_t a = 0; a < nk; ++a) {
        s[a] = std::exp(s[a] - mx);
        z += s[a];
      }
      for (std::size_t a = 0; a < nk; ++a) s[a] /= z;
      double* oi = O.row(i) + h * dh;
      for (std::size_t a = 0; a < nk; ++a) {
        const double* vj = V.row(keys[a]) + h * dh;
        for (int c = 0; c < dh; ++c) oi[c] += s[a] * vj[c];
      }
    }
  }
  const bool any = needs(q) || needs(k) || needs(v) || (has_bias && needs(bias));
  return push(std::move(O), any, name,
              [q, k, v, bias, heads, layout, probs = std::move(probs), dh, inv, has_bias](Tape& t, int self) {
                const Matrix& G = t.grad_ref(self);
                const Matrix& Q = t.value(q);
                const Matrix& K = t.value(k);
                const Matrix& V = t.value(v);
                Matrix* dQ = t.needs(q) ? &t.grad_ref(q.id) : nullptr;
                Matrix* dK = t.needs(k) ? &t.grad_ref(k.id) : nullptr;
                Matrix* dV = t.needs(v) ? &t.grad_ref(v.id) : nullptr;
                Matrix* dB = has_bias && t.needs(bias) ? &t.grad_ref(bias.id) : nullptr;
                std::vector<double> ds;
                for (int i = 0; i < Q.rows; ++i) {
                  const auto& keys = layout.keys[static_cast<std::size_t>(i)];
                  const std::size_t nk = keys.size();
                  ds.assign(nk, 0.0);
                  for (int h = 0; h < heads; ++h) {
                    const double* p = probs[static_cast<std::size_t>(i)].data() + static_cast<std::size_t>(h) * nk;
                    const double* gi = G.row(i) + h * dh;
                    double dot_pd = 0.0;
                    for (std::size_t a = 0; a < nk; ++a) {
                      const int j = keys[a];
                      const double* vj = V.row(j) + h * dh;
                      double dp = 0.0;
                      for (int c = 0; c < dh; ++c) dp += gi[c] * vj[c];
                      ds[a] = dp;
                      dot_pd += p[a] * dp;
                      if (dV) {
                        double* dvj = dV->row(j) + h * dh;
                        for (int c = 0; c < dh; ++c) dvj[c] += p[a] * gi[c];
                      }
                    }
                    for (std::size_t a = 0; a < nk; ++a) ds[a] = p[a] * (ds[a] - dot_pd);
                    if (dB && !layout.bias.empty()) {
                      for (const auto& [pos, r] : layout.bias[static_cast<std::size_t>(i)]) {
                        (*dB)(r, h) += ds[static_cast<std::size_t>(pos)];
                      }
                    }
                    const double* qi = Q.row(i) + h * dh;
                    for (std::size_t a = 0; a < nk; ++a) {
                      const int j = keys[a];
                      const double w = ds[a] * inv;
                      if (w == 0.0) continue;
                      const double* kj = K.row(j) + h * dh;
                      if (dQ) {
                        double* dqi = dQ->row(i) + h * dh;
                        for (int c = 0; c < dh; ++c) dqi[c] += w * kj[c];
                      }
                      if (dK) {
                        double* dkj = dK->row(j) + h * dh;
                        for (int c = 0; c < dh; ++c) dkj[c] += w * qi[c];
                      }
                    }
                  }
                }
              });
}

Var Tape::masked_mse(Var pred, const Matrix& target, const std::vector<std::uint8_t>& mask, const std::string& name) {
  const Matrix& P = value(pred);
  require(P.rows == target.rows && P.cols == target.cols, name + ": prediction/target shape mismatch");
  require(P.cols % 3 == 0 && mask.size() == static_cast<std::size_t>(P.rows) * static_cast<std::size_t>(P.cols / 3),
          name + ": mask shape mismatch");
  const int slots = P.cols / 3;
  std::vector<double> weight(static_cast<std::size_t>(P.rows), 0.0);
  int counted = 0;
  for (int j = 0; j < P.rows; ++j) {
    int valid = 0;
    for (int s = 0; s < slots; ++s) valid += mask[static_cast<std::size_t>(j * slots + s)] ? 1 : 0;
    if (valid == 0) continue;
    weight[static_cast<std::size_t>(j)] = 1.0 / valid;
    ++counted;
  }
  double total = 0.0;
  for (int j = 0; j < P.rows; ++j) {
    if (weight[static_cast<std::size_t>(j)] == 0.0) continue;
    double row = 0.0;
    for (int s = 0; s < slots; ++s) {
      if (!mask[static_cast<std::size_t>(j * slots + s)]) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = P(j, 3 * s + c) - target(j, 3 * s + c);
        row += d * d;
      }
    }
    total += row * weight[static_cast<std::size_t>(j)];
  }
  const double norm = counted > 0 ? 1.0 / counted : 0.0;
  Matrix L(1, 1, total * norm);
  return push(std::move(L), needs(pred), name, [pred, target, mask, weight, norm, slots](Tape& t, int self) {
    const double g = t.grad_ref(self).data[0];
    const Matrix& P = t.value(pred);
    Matrix& d = t.grad_ref(pred.id);
    for (int j = 0; j < P.rows; ++j) {
      const double w = weight[static_cast<std::size_t>(j)];
      if (w == 0.0) continue;
      for (int s = 0; s < slots; ++s) {
        if (!mask[static_cast<std::size_t>(j * slots + s)]) continue;
        for (int c = 0; c < 3; ++c) d(j, 3 * s + c) += g * 2.0 * (P(j, 3 * s + c) - target(j, 3 * s + c)) * w * norm;
      }
    }
  });
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& labels, const std::string& name) {
  const Matrix& X = value(logits);
  require(static_cast<int>(labels.size()) == X.rows && X.rows > 0, name + ": label count mismatch");
  Matrix prob(X.rows, X.cols);
  double total = 0.0;
  for (int i = 0; i < X.rows; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < X.cols, name + ": label out of range");
    const double* x = X.row(i);
    const double mx = *std::max_element(x, x + X.cols);
    double z = 0.0;
    for (int j = 0; j < X.cols; ++j) z += std::exp(x[j] - mx);
    for (int j = 0; j < X.cols; ++j) prob(i, j) = std::exp(x[j] - mx) / z;
    total -= x[y] - mx - std::log(z);
  }
  Matrix L(1, 1, total / X.rows);
  return push(std::move(L), needs(logits), name, [logits, labels, prob = std::move(prob)](Tape& t, int self) {
    const double g = t.grad_ref(self).data[0] / prob.rows;
    Matrix& d = t.grad_ref(logits.id);
    for (int i = 0; i < prob.rows; ++i) {
      for (int j = 0; j < prob.cols; ++j) {
        d(i, j) += g * (prob(i, j) - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
      }
    }
  });
}

}  // namespace b2s::nn
