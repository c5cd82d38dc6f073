#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dpdn/errors.hpp"

namespace dpdn::tensor {

using Matrix = Eigen::MatrixXd;

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns all storage.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  bool defined() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
};

// Result of reverse-mode differentiation: per-leaf gradients plus the set of
// leaves the loss did not depend on (zero gradient, flagged not silent).
struct GradientMap {
  std::map<std::string, Matrix> grads;
  std::set<std::string> disconnected;
};

// Eagerly evaluated computation graph. One tape per forward/backward pass,
// single-threaded; distinct tapes may run on distinct threads.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix m);
  // Trainable leaf. One node per name per tape; repeated requests return the
  // same node so gradients accumulate in one place.
  Tensor leaf(const std::string& name, const Matrix& value);

  // Reverse pass from a scalar loss, seeded with seed_weight. Returns
  // gradients for every leaf on this tape.
  GradientMap backward(const Tensor& loss, double seed_weight = 1.0);

  size_t size() const { return nodes_.size(); }

  // --- internals used by op constructors ---
  struct Node {
    Matrix val;
    Matrix grad;
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;
    std::string leaf_name;
    bool needs_grad = false;
    bool grad_ready = false;
  };
  int push(Matrix val, std::vector<int> parents,
           std::function<void(Tape&, int)> back);
  Node& node(int id) { return nodes_[size_t(id)]; }
  const Node& node(int id) const { return nodes_[size_t(id)]; }
  const Matrix& val(int id) const { return nodes_[size_t(id)].val; }
  // Gradient accumulator for a node, zero-initialized on first touch.
  Matrix& grad(int id);

 private:
  std::vector<Node> nodes_;
  std::map<std::string, int> leaves_;
};

// --- elementwise / structural ops ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& a, Eigen::Index c0, Eigen::Index len);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);

// Column means over rows: [N x d] -> [1 x d].
Tensor avg_pool(const Tensor& a);
// n identical copies of a row vector: [1 x d] -> [n x d].
Tensor tile(const Tensor& v, Eigen::Index n);
// x [N x b] + bias [1 x b] broadcast over rows.
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);
// y = x * w + bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor sum_all(const Tensor& a);
// Per-row Euclidean norm: [N x d] -> [N x 1]; subgradient 0 at zero rows.
Tensor rows_norm(const Tensor& a);
// Elementwise sqrt with subgradient 0 at 0.
Tensor sqrt_guarded(const Tensor& a);
// Broadcast a 1x1 scalar over all entries.
Tensor mul_by_scalar(const Tensor& x, const Tensor& s);
Tensor div_by_scalar(const Tensor& x, const Tensor& s);
// Cross product of two 1x3 rows.
Tensor cross3(const Tensor& a, const Tensor& b);

// Euclidean norm of the whole tensor flattened (Frobenius for matrices).
Tensor euclid_norm(const Tensor& a);

// Symmetric Chamfer distance between [M x 3] and [K x 3] point lists:
// (1/2M) sum_j min_k |a_j - b_k| + (1/2K) sum_k min_j |a_j - b_k|.
Tensor chamfer(const Tensor& a, const Tensor& b);

// Smooth-L1 between index-paired [N x 3] lists, summed over coordinates and
// averaged over rows: per coordinate 5*delta^2 if |delta| <= 0.1 else
// |delta| - 0.05.
Tensor smooth_l1_mean(const Tensor& a, const Tensor& b);

}  // namespace dpdn::tensor
