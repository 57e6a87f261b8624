#ifndef B2S_NN_AUTODIFF_HPP_
#define B2S_NN_AUTODIFF_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace b2s::nn {

// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
  std::size_t size() const { return data.size(); }

  bool operator==(const Matrix&) const = default;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Which keys each query may attend to, plus additive logit biases. Query i
// attends to keys[i] (ascending); bias[i] lists (position in keys[i], row of
// the bias matrix), and every listed row adds its per-head values.
struct AttentionLayout {
  std::vector<std::vector<int>> keys;
  std::vector<std::vector<std::pair<int, int>>> bias;
};

// Reverse-mode tape. Every op records its output and a closure that
// accumulates input gradients from the output gradient.
class Tape {
 public:
  Var leaf(Matrix value, bool requires_grad, std::string name);
  Var constant(Matrix value, std::string name = "const") { return leaf(std::move(value), false, std::move(name)); }

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  const std::string& name(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].name; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  // Seeds d(root)/d(root) = scale (root must be 1 x 1) and runs backward.
  // Throws NumericError naming the first tensor whose gradient is
  // non-finite.
  void backward(Var root, double scale = 1.0);

  // Ops. `name` labels the output in diagnostics.
  Var matmul(Var a, Var b, const std::string& name = "matmul");
  Var add_bias(Var x, Var bias, const std::string& name = "add_bias");
  Var add(Var a, Var b, const std::string& name = "add");
  Var scale(Var x, double s, const std::string& name = "scale");
  Var gelu(Var x, const std::string& name = "gelu");
  Var layer_norm(Var x, Var gamma, Var beta, const std::string& name = "layer_norm");
  // Multiplies row r by mask[r] (0 or 1).
  Var mask_rows(Var x, const std::vector<double>& mask, const std::string& name = "mask_rows");
  Var gather_rows(Var x, const std::vector<int>& index, const std::string& name = "gather_rows");
  Var concat_rows(const std::vector<Var>& parts, const std::string& name = "concat_rows");
  // out[g] = mean of rows groups[g].
  Var mean_rows(Var x, const std::vector<std::vector<int>>& groups, const std::string& name = "mean_rows");
  // Multi-head scaled dot-product attention; q, k, v are n x C, bias is
  // R x heads (or invalid for none).
  Var attention(Var q, Var k, Var v, int heads, const AttentionLayout& layout, Var bias,
                const std::string& name = "attention");
  // (1/N) sum_j (1/|O_j|) sum_{p in O_j} |pred - target|^2 over rows j with a
  // non-empty valid set; pred and target are N x (slots * 3), mask N x slots.
  Var masked_mse(Var pred, const Matrix& target, const std::vector<std::uint8_t>& mask,
                 const std::string& name = "masked_mse");
  // Mean softmax cross-entropy of rows of `logits` against class labels.
  Var cross_entropy(Var logits, const std::vector<int>& labels, const std::string& name = "cross_entropy");

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::string name;
    std::function<void(Tape&, int)> backward;
  };

  Var push(Matrix value, bool requires_grad, std::string name, std::function<void(Tape&, int)> backward);
  Matrix& grad_ref(int id);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  std::vector<Node> nodes_;
};

}  // namespace b2s::nn

#endif  // B2S_NN_AUTODIFF_HPP_
