#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace npmesh {

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Tape;

// Handle to a node on a tape. Values are dense 64-bit matrices (vectors and
// scalars are 1-column / 1x1 matrices).
struct Tensor {
  int id = -1;
  Tape* tape = nullptr;

  const Eigen::MatrixXd& value() const;
  const Eigen::MatrixXd& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Dynamic tape: nodes are created in execution order and backward runs in
// reverse creation order, which fixes the accumulation order.
class Tape {
public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tensor input(const Eigen::MatrixXd& value);
  Tensor make_node(Eigen::MatrixXd value, std::vector<int> inputs, BackwardFn backward);

  const Eigen::MatrixXd& value(int id) const { return nodes_[id].value; }
  Eigen::MatrixXd& grad(int id) { return nodes_[id].grad; }
  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }

  // Accumulates 1 into the loss gradient and propagates. loss must be 1x1.
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    std::vector<int> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- core ops ----
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor scale(Tensor a, double c);
Tensor matmul(Tensor a, Tensor b);
Tensor concat(int axis, Tensor a, Tensor b);
Tensor relu(Tensor a);
Tensor abs_op(Tensor a);
Tensor mul(Tensor a, Tensor b); // elementwise
Tensor add_rowvec(Tensor a, Tensor row);
Tensor gather_rows(Tensor a, const std::vector<int>& idx);
Tensor segment_sum(Tensor a, const std::vector<int>& ids, int num_segments);
Tensor segment_mean(Tensor a, const std::vector<int>& ids, int num_segments);
Tensor row_l2(Tensor a);       // n x 1 of row norms
Tensor l1_sum(Tensor a);       // 1x1
Tensor sum_all(Tensor a);      // 1x1
Tensor frobenius(Tensor a);    // 1x1
Tensor cross_rows(Tensor a, Tensor b);   // rowwise cross product, n x 3
Tensor dot_rows(Tensor a, Tensor b);     // rowwise dot, n x 1
Tensor normalize_rows(Tensor a);
Tensor atan2_cols(Tensor y, Tensor x);   // elementwise on n x 1 columns

struct BatchNormState {
  Eigen::RowVectorXd running_mean;
  Eigen::RowVectorXd running_var;
};

// conv-style batch normalization over rows; gamma/beta are 1 x C.
// In train mode normalizes by batch statistics (biased variance) and, when
// update_running is set, folds them into state with the given momentum.
Tensor batchnorm(Tensor x, Tensor gamma, Tensor beta, BatchNormState& state, bool train,
                 double momentum = 0.1, double eps = 1e-5, bool update_running = true);

// ---- parameters & optimizer ----
struct Param {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd m, v; // ADAM moments
  bool trainable = true;
};

class ParamStore {
public:
  Param& add(const std::string& name, Eigen::MatrixXd value, bool trainable = true);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  void zero_grad();
  std::map<std::string, Param>& params() { return params_; }
  const std::map<std::string, Param>& params() const { return params_; }

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }
  void increment_step() { ++step_; }

private:
  std::map<std::string, Param> params_;
  int64_t step_ = 0;
};

// ADAM with bias correction; weight decay is added to the gradient before the
// moment updates.
void adam_step(ParamStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8, double weight_decay = 0.0);

// Checkpoint I/O. Version 1 stores float32 payloads (the wire format);
// version 2 stores float64 and is used for exact training resume.
void save_checkpoint(const ParamStore& store, const std::string& path, bool with_moments = true,
                     int version = 2);
ParamStore load_checkpoint(const std::string& path);

// ---- gradient verification ----
struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst_param;
};

// f(store, with_grad) computes a scalar loss from the current parameter
// values; when with_grad it must also populate store gradients (from zero).
GradCheckReport grad_check(ParamStore& store,
                           const std::function<double(ParamStore&, bool)>& f,
                           int samples_per_param = 8, uint64_t seed = 7,
                           double h = 1e-6);

} // namespace npmesh
