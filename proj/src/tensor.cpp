#include "npmesh/tensor.hpp"

#include "npmesh/rng.hpp"

#include <cstring>
#include <fstream>

namespace npmesh {

const Eigen::MatrixXd& Tensor::value() const { return tape->value(id); }
const Eigen::MatrixXd& Tensor::grad() const { return const_cast<Tape*>(tape)->grad(id); }

Tensor Tape::input(const Eigen::MatrixXd& value) {
  return make_node(value, {}, nullptr);
}

Tensor Tape::make_node(Eigen::MatrixXd value, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1, this};
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape != this) throw TensorError("loss tensor belongs to another tape");
  if (loss.value().rows() != 1 || loss.value().cols() != 1)
    throw TensorError("backward requires a scalar loss");
  nodes_[loss.id].grad(0, 0) += 1.0;
  for (int id = loss.id; id >= 0; --id)
    if (nodes_[id].backward) nodes_[id].backward(*this, id);
}

namespace {

void check_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape != b.tape) throw TensorError("operands on different tapes");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw TensorError(std::string(op) + ": shape mismatch");
}

} // namespace

Tensor add(Tensor a, Tensor b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "add");
  return a.tape->make_node(a.value() + b.value(), {a.id, b.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    t.grad(t.inputs(id)[0]) += g;
    t.grad(t.inputs(id)[1]) += g;
  });
}

Tensor sub(Tensor a, Tensor b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "sub");
  return a.tape->make_node(a.value() - b.value(), {a.id, b.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    t.grad(t.inputs(id)[0]) += g;
    t.grad(t.inputs(id)[1]) -= g;
  });
}

Tensor scale(Tensor a, double c) {
  return a.tape->make_node(a.value() * c, {a.id}, [c](Tape& t, int id) {
    t.grad(t.inputs(id)[0]) += t.grad(id) * c;
  });
}

Tensor matmul(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw TensorError("matmul: inner dimensions differ");
  return a.tape->make_node(a.value() * b.value(), {a.id, b.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    int ia = t.inputs(id)[0], ib = t.inputs(id)[1];
    t.grad(ia) += g * t.value(ib).transpose();
    t.grad(ib) += t.value(ia).transpose() * g;
  });
}

Tensor concat(int axis, Tensor a, Tensor b) {
  check_same_tape(a, b);
  Eigen::MatrixXd out;
  if (axis == 0) {
    if (a.cols() != b.cols()) throw TensorError("concat axis 0: column mismatch");
    out.resize(a.rows() + b.rows(), a.cols());
    out << a.value(), b.value();
  } else if (axis == 1) {
    if (a.rows() != b.rows()) throw TensorError("concat axis 1: row mismatch");
    out.resize(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
  } else {
    throw TensorError("concat: axis out of range");
  }
  long ar = a.rows(), ac = a.cols();
  return a.tape->make_node(std::move(out), {a.id, b.id}, [axis, ar, ac](Tape& t, int id) {
    const auto& g = t.grad(id);
    int ia = t.inputs(id)[0], ib = t.inputs(id)[1];
    if (axis == 0) {
      t.grad(ia) += g.topRows(ar);
      t.grad(ib) += g.bottomRows(g.rows() - ar);
    } else {
      t.grad(ia) += g.leftCols(ac);
      t.grad(ib) += g.rightCols(g.cols() - ac);
    }
  });
}

Tensor relu(Tensor a) {
  return a.tape->make_node(a.value().cwiseMax(0.0), {a.id}, [](Tape& t, int id) {
    int ia = t.inputs(id)[0];
    t.grad(ia).array() += t.grad(id).array() * (t.value(ia).array() > 0.0).cast<double>();
  });
}

Tensor abs_op(Tensor a) {
  return a.tape->make_node(a.value().cwiseAbs(), {a.id}, [](Tape& t, int id) {
    int ia = t.inputs(id)[0];
    t.grad(ia).array() += t.grad(id).array() * t.value(ia).array().sign();
  });
}

Tensor mul(Tensor a, Tensor b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "mul");
  return a.tape->make_node(a.value().cwiseProduct(b.value()), {a.id, b.id},
                           [](Tape& t, int id) {
                             const auto& g = t.grad(id);
                             int ia = t.inputs(id)[0], ib = t.inputs(id)[1];
                             t.grad(ia) += g.cwiseProduct(t.value(ib));
                             t.grad(ib) += g.cwiseProduct(t.value(ia));
                           });
}

Tensor add_rowvec(Tensor a, Tensor row) {
  check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw TensorError("add_rowvec: shape mismatch");
  Eigen::MatrixXd out = a.value();
  out.rowwise() += Eigen::RowVectorXd(row.value().row(0));
  return a.tape->make_node(std::move(out), {a.id, row.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    t.grad(t.inputs(id)[0]) += g;
    t.grad(t.inputs(id)[1]) += g.colwise().sum();
  });
}

Tensor gather_rows(Tensor a, const std::vector<int>& idx) {
  for (int i : idx)
    if (i < 0 || i >= a.rows()) throw TensorError("gather_rows: index out of range");
  Eigen::MatrixXd out(idx.size(), a.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = a.value().row(idx[i]);
  return a.tape->make_node(std::move(out), {a.id}, [idx](Tape& t, int id) {
    const auto& g = t.grad(id);
    auto& ga = t.grad(t.inputs(id)[0]);
    for (size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(i);
  });
}

Tensor segment_sum(Tensor a, const std::vector<int>& ids, int num_segments) {
  if (static_cast<long>(ids.size()) != a.rows())
    throw TensorError("segment_sum: one id per row required");
  for (int s : ids)
    if (s < 0 || s >= num_segments) throw TensorError("segment_sum: id out of range");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(num_segments, a.cols());
  for (size_t i = 0; i < ids.size(); ++i) out.row(ids[i]) += a.value().row(i);
  return a.tape->make_node(std::move(out), {a.id}, [ids](Tape& t, int id) {
    const auto& g = t.grad(id);
    auto& ga = t.grad(t.inputs(id)[0]);
    for (size_t i = 0; i < ids.size(); ++i) ga.row(i) += g.row(ids[i]);
  });
}

Tensor segment_mean(Tensor a, const std::vector<int>& ids, int num_segments) {
  if (static_cast<long>(ids.size()) != a.rows())
    throw TensorError("segment_mean: one id per row required");
  std::vector<double> count(num_segments, 0.0);
  for (int s : ids) {
    if (s < 0 || s >= num_segments) throw TensorError("segment_mean: id out of range");
    count[s] += 1.0;
  }
  for (double c : count)
    if (c == 0.0) throw TensorError("segment_mean: empty segment");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(num_segments, a.cols());
  for (size_t i = 0; i < ids.size(); ++i) out.row(ids[i]) += a.value().row(i);
  for (int s = 0; s < num_segments; ++s) out.row(s) /= count[s];
  return a.tape->make_node(std::move(out), {a.id}, [ids, count](Tape& t, int id) {
    const auto& g = t.grad(id);
    auto& ga = t.grad(t.inputs(id)[0]);
    for (size_t i = 0; i < ids.size(); ++i) ga.row(i) += g.row(ids[i]) / count[ids[i]];
  });
}

Tensor row_l2(Tensor a) {
  Eigen::MatrixXd out = a.value().rowwise().norm();
  return a.tape->make_node(std::move(out), {a.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    int ia = t.inputs(id)[0];
    auto& ga = t.grad(ia);
    const auto& x = t.value(ia);
    const auto& n = t.value(id);
    for (long i = 0; i < x.rows(); ++i)
      if (n(i, 0) > 1e-300) ga.row(i) += g(i, 0) / n(i, 0) * x.row(i);
  });
}

Tensor l1_sum(Tensor a) {
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.value().cwiseAbs().sum();
  return a.tape->make_node(std::move(out), {a.id}, [](Tape& t, int id) {
    int ia = t.inputs(id)[0];
    t.grad(ia).array() += t.grad(id)(0, 0) * t.value(ia).array().sign();
  });
}

Tensor sum_all(Tensor a) {
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->make_node(std::move(out), {a.id}, [](Tape& t, int id) {
    t.grad(t.inputs(id)[0]).array() += t.grad(id)(0, 0);
  });
}

Tensor frobenius(Tensor a) {
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.value().norm();
  return a.tape->make_node(std::move(out), {a.id}, [](Tape& t, int id) {
    int ia = t.inputs(id)[0];
    double f = t.value(id)(0, 0);
    if (f > 1e-300) t.grad(ia) += t.grad(id)(0, 0) / f * t.value(ia);
  });
}

Tensor cross_rows(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.cols() != 3 || b.cols() != 3 || a.rows() != b.rows())
    throw TensorError("cross_rows: n x 3 operands required");
  Eigen::MatrixXd out(a.rows(), 3);
  for (long i = 0; i < a.rows(); ++i)
    out.row(i) = Eigen::Vector3d(a.value().row(i)).cross(Eigen::Vector3d(b.value().row(i)));
  return a.tape->make_node(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    int ia = t.inputs(id)[0], ib = t.inputs(id)[1];
    for (long i = 0; i < g.rows(); ++i) {
      Eigen::Vector3d gi = g.row(i), av = t.value(ia).row(i), bv = t.value(ib).row(i);
      t.grad(ia).row(i) += bv.cross(gi).transpose();
      t.grad(ib).row(i) += gi.cross(av).transpose();
    }
  });
}

Tensor dot_rows(Tensor a, Tensor b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "dot_rows");
  Eigen::MatrixXd out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape->make_node(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    int ia = t.inputs(id)[0], ib = t.inputs(id)[1];
    for (long i = 0; i < g.rows(); ++i) {
      t.grad(ia).row(i) += g(i, 0) * t.value(ib).row(i);
      t.grad(ib).row(i) += g(i, 0) * t.value(ia).row(i);
    }
  });
}

Tensor normalize_rows(Tensor a) {
  Eigen::MatrixXd out = a.value();
  for (long i = 0; i < out.rows(); ++i) {
    double n = out.row(i).norm();
    if (n <= 1e-300) throw TensorError("normalize_rows: zero row");
    out.row(i) /= n;
  }
  return a.tape->make_node(std::move(out), {a.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    int ia = t.inputs(id)[0];
    for (long i = 0; i < g.rows(); ++i) {
      Eigen::RowVectorXd y = t.value(id).row(i);
      double n = t.value(ia).row(i).norm();
      Eigen::RowVectorXd gi = g.row(i);
      t.grad(ia).row(i) += (gi - (gi.dot(y)) * y) / n;
    }
  });
}

Tensor atan2_cols(Tensor y, Tensor x) {
  check_same_tape(y, x);
  check_same_shape(y, x, "atan2_cols");
  Eigen::MatrixXd out(y.rows(), y.cols());
  for (long i = 0; i < y.rows(); ++i)
    for (long j = 0; j < y.cols(); ++j) out(i, j) = std::atan2(y.value()(i, j), x.value()(i, j));
  return y.tape->make_node(std::move(out), {y.id, x.id}, [](Tape& t, int id) {
    const auto& g = t.grad(id);
    int iy = t.inputs(id)[0], ix = t.inputs(id)[1];
    auto d = (t.value(ix).array().square() + t.value(iy).array().square()).eval();
    t.grad(iy).array() += g.array() * t.value(ix).array() / d;
    t.grad(ix).array() -= g.array() * t.value(iy).array() / d;
  });
}

Tensor batchnorm(Tensor x, Tensor gamma, Tensor beta, BatchNormState& state, bool train,
                 double momentum, double eps, bool update_running) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const long C = x.cols();
  if (gamma.cols() != C || beta.cols() != C || gamma.rows() != 1 || beta.rows() != 1)
    throw TensorError("batchnorm: affine shape mismatch");
  if (state.running_mean.size() != C) {
    state.running_mean = Eigen::RowVectorXd::Zero(C);
    state.running_var = Eigen::RowVectorXd::Ones(C);
  }

  const auto& xv = x.value();
  const double n = static_cast<double>(xv.rows());
  Eigen::RowVectorXd mean, var;
  if (train) {
    mean = xv.colwise().mean();
    var = (xv.rowwise() - mean).array().square().colwise().mean();
    if (update_running) {
      state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mean;
      state.running_var = (1.0 - momentum) * state.running_var + momentum * var;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  Eigen::MatrixXd xhat = (xv.rowwise() - mean).array().rowwise() * inv_std.array();
  Eigen::MatrixXd out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += Eigen::RowVectorXd(beta.value().row(0));

  return x.tape->make_node(
      std::move(out), {x.id, gamma.id, beta.id},
      [xhat, inv_std, train, n](Tape& t, int id) {
        const auto& g = t.grad(id);
        int ix = t.inputs(id)[0], ig = t.inputs(id)[1], ib = t.inputs(id)[2];
        t.grad(ib).row(0) += g.colwise().sum();
        t.grad(ig).row(0) += g.cwiseProduct(xhat).colwise().sum();
        Eigen::MatrixXd dxhat = g.array().rowwise() * t.value(ig).row(0).array();
        if (train) {
          Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
          Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
          Eigen::MatrixXd dx = (n * dxhat).rowwise() - sum_d;
          dx -= (xhat.array().rowwise() * sum_dx.array()).matrix();
          dx = ((dx.array().rowwise() * inv_std.array()) / n).matrix();
          t.grad(ix) += dx;
        } else {
          t.grad(ix) += (dxhat.array().rowwise() * inv_std.array()).matrix();
        }
      });
}

// ---- parameters & optimizer ----

Param& ParamStore::add(const std::string& name, Eigen::MatrixXd value, bool trainable) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw TensorError("duplicate parameter name: " + name);
  Param& p = it->second;
  p.value = std::move(value);
  p.grad = Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols());
  p.m = Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols());
  p.v = Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols());
  p.trainable = trainable;
  return p;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("no such parameter: " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("no such parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps,
               double weight_decay) {
  store.increment_step();
  const double t = static_cast<double>(store.step_count());
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (auto& [name, p] : store.params()) {
    if (!p.trainable) continue;
    Eigen::MatrixXd g = p.grad;
    if (weight_decay != 0.0) g += weight_decay * p.value;
    p.m = beta1 * p.m + (1.0 - beta1) * g;
    p.v = beta2 * p.v + (1.0 - beta2) * g.cwiseProduct(g);
    Eigen::MatrixXd mhat = p.m / bc1;
    Eigen::MatrixXd vhat = p.v / bc2;
    p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

// ---- checkpoint I/O ----

namespace {

template <typename T>
void write_raw(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw TensorError("truncated checkpoint");
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m,
                  int version) {
  write_raw<uint16_t>(out, static_cast<uint16_t>(name.size()));
  out.write(name.data(), name.size());
  write_raw<uint8_t>(out, 2);
  write_raw<uint32_t>(out, static_cast<uint32_t>(m.rows()));
  write_raw<uint32_t>(out, static_cast<uint32_t>(m.cols()));
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) {
      if (version == 1)
        write_raw<float>(out, static_cast<float>(m(i, j)));
      else
        write_raw<double>(out, m(i, j));
    }
}

} // namespace

void save_checkpoint(const ParamStore& store, const std::string& path, bool with_moments,
                     int version) {
  if (version != 1 && version != 2) throw TensorError("unsupported checkpoint version");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TensorError("cannot write checkpoint: " + path);
  out.write("NPMW", 4);
  write_raw<uint8_t>(out, static_cast<uint8_t>(version));
  uint32_t count = 0;
  for (auto& [name, p] : store.params()) count += with_moments && p.trainable ? 3u : 1u;
  if (with_moments) ++count; // step counter
  write_raw<uint32_t>(out, count);
  for (auto& [name, p] : store.params()) {
    write_tensor(out, name, p.value, version);
    if (with_moments && p.trainable) {
      write_tensor(out, name + ".m", p.m, version);
      write_tensor(out, name + ".v", p.v, version);
    }
  }
  if (with_moments) {
    Eigen::MatrixXd step(1, 1);
    step(0, 0) = static_cast<double>(store.step_count());
    write_tensor(out, "opt.step", step, version);
  }
  if (!out) throw TensorError("I/O failure writing " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NPMW", 4) != 0) throw TensorError("bad checkpoint magic");
  int version = read_raw<uint8_t>(in);
  if (version != 1 && version != 2) throw TensorError("unsupported checkpoint version");
  uint32_t count = read_raw<uint32_t>(in);

  std::map<std::string, Eigen::MatrixXd> tensors;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = read_raw<uint16_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    uint8_t rank = read_raw<uint8_t>(in);
    if (rank < 1 || rank > 3) throw TensorError("bad tensor rank in checkpoint");
    std::vector<uint32_t> dims(rank);
    for (auto& d : dims) d = read_raw<uint32_t>(in);
    long rows = dims[0];
    long cols = 1;
    for (size_t k = 1; k < dims.size(); ++k) cols *= dims[k];
    Eigen::MatrixXd m(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c)
        m(r, c) = version == 1 ? static_cast<double>(read_raw<float>(in)) : read_raw<double>(in);
    tensors.emplace(std::move(name), std::move(m));
  }

  ParamStore store;
  for (auto& [name, m] : tensors) {
    if (name == "opt.step" || name.ends_with(".m") || name.ends_with(".v")) continue;
    Param& p = store.add(name, m);
    auto mm = tensors.find(name + ".m");
    auto vv = tensors.find(name + ".v");
    if (mm != tensors.end()) p.m = mm->second;
    if (vv != tensors.end()) p.v = vv->second;
    // running statistics are carried but not optimized
    if (name.ends_with(".bn.mean") || name.ends_with(".bn.var") || name.starts_with("meta."))
      p.trainable = false;
  }
  auto st = tensors.find("opt.step");
  if (st != tensors.end()) store.set_step_count(static_cast<int64_t>(st->second(0, 0)));
  return store;
}

GradCheckReport grad_check(ParamStore& store, const std::function<double(ParamStore&, bool)>& f,
                           int samples_per_param, uint64_t seed, double h) {
  store.zero_grad();
  f(store, true);
  std::map<std::string, Eigen::MatrixXd> analytic;
  for (auto& [name, p] : store.params())
    if (p.trainable) analytic[name] = p.grad;

  GradCheckReport report;
  Rng rng(seed);
  for (auto& [name, p] : store.params()) {
    if (!p.trainable) continue;
    const long total = p.value.size();
    for (int s = 0; s < samples_per_param && s < total; ++s) {
      long k = samples_per_param >= total ? s : static_cast<long>(rng.uniform_index(total));
      double* coeff = p.value.data() + k;
      double orig = *coeff;
      *coeff = orig + h;
      double fp = f(store, false);
      *coeff = orig - h;
      double fm = f(store, false);
      *coeff = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[name](k);
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
      }
    }
  }
  return report;
}

} // namespace npmesh
