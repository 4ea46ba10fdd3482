#include "regent/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace regent::ad {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  double z = std::exp(x);
  return z / (1.0 + z);
}
}  // namespace

Parameter& ParamSet::add(const std::string& name, Matrix init, bool trainable) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  items_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  items_.back()->trainable = trainable;
  return *items_.back();
}

Parameter* ParamSet::find(const std::string& name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParamSet::find(const std::string& name) const {
  for (const auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

Parameter& ParamSet::at(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + name);
  return *p;
}

void ParamSet::zero_grad() {
  for (auto& p : items_) p->grad.fill(0.0);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p->value.size();
  return n;
}

std::vector<Matrix> ParamSet::snapshot_values() const {
  std::vector<Matrix> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p->value);
  return out;
}

void ParamSet::restore_values(const std::vector<Matrix>& values) {
  if (values.size() != items_.size())
    throw std::invalid_argument("restore_values: parameter count mismatch");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (!values[i].same_shape(items_[i]->value))
      throw std::invalid_argument("restore_values: shape mismatch for " + items_[i]->name);
    items_[i]->value = values[i];
  }
}

Node* Tape::make(Matrix value) {
  nodes_.push_back(std::make_unique<Node>());
  nodes_.back()->value = std::move(value);
  return nodes_.back().get();
}

bool Tape::track(std::initializer_list<Node*> parents) const {
  if (!recording_) return false;
  for (Node* p : parents)
    if (p != nullptr && p->needs_grad) return true;
  return false;
}

Node* Tape::constant(Matrix value) { return make(std::move(value)); }

Node* Tape::param(Parameter& p) {
  Node* n = make(p.value);
  if (recording_) {
    n->needs_grad = true;
    n->bound = &p;
  }
  return n;
}

Node* Tape::matmul(Node* a, Node* b, bool trans_a, bool trans_b) {
  Node* out = make(regent::matmul(a->value, b->value, trans_a, trans_b));
  if (track({a, b})) {
    out->needs_grad = true;
    out->backprop = [out, a, b, trans_a, trans_b]() {
      const Matrix& g = out->grad;
      if (a->needs_grad) {
        a->ensure_grad();
        Matrix da;
        if (!trans_a && !trans_b) da = regent::matmul(g, b->value, false, true);
        else if (!trans_a && trans_b) da = regent::matmul(g, b->value, false, false);
        else if (trans_a && !trans_b) da = regent::matmul(b->value, g, false, true);
        else da = regent::matmul(b->value, g, true, true);
        a->grad.add_inplace(da);
      }
      if (b->needs_grad) {
        b->ensure_grad();
        Matrix db;
        if (!trans_a && !trans_b) db = regent::matmul(a->value, g, true, false);
        else if (!trans_a && trans_b) db = regent::matmul(g, a->value, true, false);
        else if (trans_a && !trans_b) db = regent::matmul(a->value, g, false, false);
        else db = regent::matmul(g, a->value, true, true);
        b->grad.add_inplace(db);
      }
    };
  }
  return out;
}

Node* Tape::add(Node* a, Node* b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
  Matrix v = a->value;
  v.add_inplace(b->value);
  Node* out = make(std::move(v));
  if (track({a, b})) {
    out->needs_grad = true;
    out->backprop = [out, a, b]() {
      if (a->needs_grad) {
        a->ensure_grad();
        a->grad.add_inplace(out->grad);
      }
      if (b->needs_grad) {
        b->ensure_grad();
        b->grad.add_inplace(out->grad);
      }
    };
  }
  return out;
}

Node* Tape::sub(Node* a, Node* b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("sub: shape mismatch");
  Matrix v = a->value;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) -= b->value(i, j);
  Node* out = make(std::move(v));
  if (track({a, b})) {
    out->needs_grad = true;
    out->backprop = [out, a, b]() {
      if (a->needs_grad) {
        a->ensure_grad();
        a->grad.add_inplace(out->grad);
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->grad.rows(); ++i)
          for (std::size_t j = 0; j < b->grad.cols(); ++j) b->grad(i, j) -= out->grad(i, j);
      }
    };
  }
  return out;
}

Node* Tape::mul(Node* a, Node* b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul: shape mismatch");
  Matrix v = a->value;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) *= b->value(i, j);
  Node* out = make(std::move(v));
  if (track({a, b})) {
    out->needs_grad = true;
    out->backprop = [out, a, b]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->grad.rows(); ++i)
          for (std::size_t j = 0; j < a->grad.cols(); ++j)
            a->grad(i, j) += out->grad(i, j) * b->value(i, j);
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->grad.rows(); ++i)
          for (std::size_t j = 0; j < b->grad.cols(); ++j)
            b->grad(i, j) += out->grad(i, j) * a->value(i, j);
      }
    };
  }
  return out;
}

Node* Tape::add_rowvec(Node* a, Node* row) {
  if (row->rows() != 1 || row->cols() != a->cols())
    throw std::invalid_argument("add_rowvec: expected [1 x cols]");
  Matrix v = a->value;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += row->value(0, j);
  Node* out = make(std::move(v));
  if (track({a, row})) {
    out->needs_grad = true;
    out->backprop = [out, a, row]() {
      if (a->needs_grad) {
        a->ensure_grad();
        a->grad.add_inplace(out->grad);
      }
      if (row->needs_grad) {
        row->ensure_grad();
        for (std::size_t i = 0; i < out->grad.rows(); ++i)
          for (std::size_t j = 0; j < out->grad.cols(); ++j)
            row->grad(0, j) += out->grad(i, j);
      }
    };
  }
  return out;
}

Node* Tape::mul_colvec(Node* a, Node* col) {
  if (col->cols() != 1 || col->rows() != a->rows())
    throw std::invalid_argument("mul_colvec: expected [rows x 1]");
  Matrix v = a->value;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) *= col->value(i, 0);
  Node* out = make(std::move(v));
  if (track({a, col})) {
    out->needs_grad = true;
    out->backprop = [out, a, col]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->grad.rows(); ++i)
          for (std::size_t j = 0; j < a->grad.cols(); ++j)
            a->grad(i, j) += out->grad(i, j) * col->value(i, 0);
      }
      if (col->needs_grad) {
        col->ensure_grad();
        for (std::size_t i = 0; i < a->value.rows(); ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < a->value.cols(); ++j)
            acc += out->grad(i, j) * a->value(i, j);
          col->grad(i, 0) += acc;
        }
      }
    };
  }
  return out;
}

Node* Tape::scale(Node* a, double c) {
  Matrix v = a->value;
  v.scale_inplace(c);
  Node* out = make(std::move(v));
  if (track({a})) {
    out->needs_grad = true;
    out->backprop = [out, a, c]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->grad.rows(); ++i)
        for (std::size_t j = 0; j < a->grad.cols(); ++j) a->grad(i, j) += c * out->grad(i, j);
    };
  }
  return out;
}

Node* Tape::mul_scalar(Node* a, Node* s) {
  if (s->rows() != 1 || s->cols() != 1) throw std::invalid_argument("mul_scalar: s must be 1x1");
  double sv = s->value(0, 0);
  Matrix v = a->value;
  v.scale_inplace(sv);
  Node* out = make(std::move(v));
  if (track({a, s})) {
    out->needs_grad = true;
    out->backprop = [out, a, s, sv]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->grad.rows(); ++i)
          for (std::size_t j = 0; j < a->grad.cols(); ++j)
            a->grad(i, j) += sv * out->grad(i, j);
      }
      if (s->needs_grad) {
        s->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < a->value.rows(); ++i)
          for (std::size_t j = 0; j < a->value.cols(); ++j)
            acc += out->grad(i, j) * a->value(i, j);
        s->grad(0, 0) += acc;
      }
    };
  }
  return out;
}

Node* Tape::concat_cols(Node* a, Node* b) {
  if (a->rows() != b->rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix v(a->rows(), a->cols() + b->cols());
  for (std::size_t i = 0; i < v.rows(); ++i) {
    for (std::size_t j = 0; j < a->cols(); ++j) v(i, j) = a->value(i, j);
    for (std::size_t j = 0; j < b->cols(); ++j) v(i, a->cols() + j) = b->value(i, j);
  }
  Node* out = make(std::move(v));
  if (track({a, b})) {
    out->needs_grad = true;
    std::size_t ac = a->cols();
    out->backprop = [out, a, b, ac]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->grad.rows(); ++i)
          for (std::size_t j = 0; j < ac; ++j) a->grad(i, j) += out->grad(i, j);
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->grad.rows(); ++i)
          for (std::size_t j = 0; j < b->grad.cols(); ++j)
            b->grad(i, j) += out->grad(i, ac + j);
      }
    };
  }
  return out;
}

Node* Tape::slice_cols(Node* a, std::size_t first, std::size_t width) {
  if (first + width > a->cols()) throw std::invalid_argument("slice_cols: out of range");
  Matrix v(a->rows(), width);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) v(i, j) = a->value(i, first + j);
  Node* out = make(std::move(v));
  if (track({a})) {
    out->needs_grad = true;
    out->backprop = [out, a, first, width]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.rows(); ++i)
        for (std::size_t j = 0; j < width; ++j) a->grad(i, first + j) += out->grad(i, j);
    };
  }
  return out;
}

Node* Tape::row_sum(Node* a) {
  Matrix v(a->rows(), 1);
  for (std::size_t i = 0; i < a->rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a->cols(); ++j) acc += a->value(i, j);
    v(i, 0) = acc;
  }
  Node* out = make(std::move(v));
  if (track({a})) {
    out->needs_grad = true;
    out->backprop = [out, a]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->grad.rows(); ++i)
        for (std::size_t j = 0; j < a->grad.cols(); ++j) a->grad(i, j) += out->grad(i, 0);
    };
  }
  return out;
}

Node* Tape::softmax_rows(Node* a, const std::vector<std::uint8_t>* key_mask) {
  if (key_mask != nullptr && key_mask->size() != a->cols())
    throw std::invalid_argument("softmax_rows: mask length mismatch");
  Matrix v(a->rows(), a->cols());
  for (std::size_t i = 0; i < a->rows(); ++i) {
    double mx = kNegInf;
    for (std::size_t j = 0; j < a->cols(); ++j) {
      if (key_mask != nullptr && (*key_mask)[j] == 0) continue;
      mx = std::max(mx, a->value(i, j));
    }
    if (mx == kNegInf) throw std::domain_error("softmax_rows: all keys masked");
    double denom = 0.0;
    for (std::size_t j = 0; j < a->cols(); ++j) {
      if (key_mask != nullptr && (*key_mask)[j] == 0) {
        v(i, j) = 0.0;
        continue;
      }
      v(i, j) = std::exp(a->value(i, j) - mx);
      denom += v(i, j);
    }
    for (std::size_t j = 0; j < a->cols(); ++j) v(i, j) /= denom;
  }
  Node* out = make(std::move(v));
  if (track({a})) {
    out->needs_grad = true;
    out->backprop = [out, a]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->grad.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < a->grad.cols(); ++j)
          dot += out->grad(i, j) * out->value(i, j);
        for (std::size_t j = 0; j < a->grad.cols(); ++j)
          a->grad(i, j) += out->value(i, j) * (out->grad(i, j) - dot);
      }
    };
  }
  return out;
}

Node* Tape::layer_norm_rows(Node* x, Node* gain, Node* bias, double eps) {
  std::size_t d = x->cols();
  if (gain->rows() != 1 || gain->cols() != d || bias->rows() != 1 || bias->cols() != d)
    throw std::invalid_argument("layer_norm_rows: gain/bias must be [1 x d]");
  Matrix xhat(x->rows(), d);
  std::vector<double> inv_sigma(x->rows());
  for (std::size_t i = 0; i < x->rows(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x->value(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = x->value(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_sigma[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) xhat(i, j) = (x->value(i, j) - mean) * inv_sigma[i];
  }
  Matrix v(x->rows(), d);
  for (std::size_t i = 0; i < x->rows(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      v(i, j) = gain->value(0, j) * xhat(i, j) + bias->value(0, j);
  Node* out = make(std::move(v));
  if (track({x, gain, bias})) {
    out->needs_grad = true;
    out->backprop = [out, x, gain, bias, xhat = std::move(xhat),
                     inv_sigma = std::move(inv_sigma)]() {
      std::size_t d = x->cols();
      double dn = static_cast<double>(d);
      if (gain->needs_grad) {
        gain->ensure_grad();
        for (std::size_t i = 0; i < out->grad.rows(); ++i)
          for (std::size_t j = 0; j < d; ++j)
            gain->grad(0, j) += out->grad(i, j) * xhat(i, j);
      }
      if (bias->needs_grad) {
        bias->ensure_grad();
        for (std::size_t i = 0; i < out->grad.rows(); ++i)
          for (std::size_t j = 0; j < d; ++j) bias->grad(0, j) += out->grad(i, j);
      }
      if (x->needs_grad) {
        x->ensure_grad();
        for (std::size_t i = 0; i < out->grad.rows(); ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            double dxhat = out->grad(i, j) * gain->value(0, j);
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat(i, j);
          }
          mean_dxhat /= dn;
          mean_dxhat_xhat /= dn;
          for (std::size_t j = 0; j < d; ++j) {
            double dxhat = out->grad(i, j) * gain->value(0, j);
            x->grad(i, j) += inv_sigma[i] * (dxhat - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return out;
}

Node* Tape::gelu(Node* x) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  Matrix v(x->rows(), x->cols());
  for (std::size_t i = 0; i < x->rows(); ++i)
    for (std::size_t j = 0; j < x->cols(); ++j) {
      double t = x->value(i, j);
      v(i, j) = 0.5 * t * (1.0 + std::erf(t * kInvSqrt2));
    }
  Node* out = make(std::move(v));
  if (track({x})) {
    out->needs_grad = true;
    out->backprop = [out, x]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->grad.rows(); ++i)
        for (std::size_t j = 0; j < x->grad.cols(); ++j) {
          double t = x->value(i, j);
          double phi = 0.5 * (1.0 + std::erf(t * kInvSqrt2));
          double dens = kInvSqrt2Pi * std::exp(-0.5 * t * t);
          x->grad(i, j) += out->grad(i, j) * (phi + t * dens);
        }
    };
  }
  return out;
}

Node* Tape::sigmoid(Node* x) {
  Matrix v(x->rows(), x->cols());
  for (std::size_t i = 0; i < x->rows(); ++i)
    for (std::size_t j = 0; j < x->cols(); ++j) v(i, j) = sigmoid_scalar(x->value(i, j));
  Node* out = make(std::move(v));
  if (track({x})) {
    out->needs_grad = true;
    out->backprop = [out, x]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->grad.rows(); ++i)
        for (std::size_t j = 0; j < x->grad.cols(); ++j) {
          double y = out->value(i, j);
          x->grad(i, j) += out->grad(i, j) * y * (1.0 - y);
        }
    };
  }
  return out;
}

Node* Tape::tanh_act(Node* x) {
  Matrix v(x->rows(), x->cols());
  for (std::size_t i = 0; i < x->rows(); ++i)
    for (std::size_t j = 0; j < x->cols(); ++j) v(i, j) = std::tanh(x->value(i, j));
  Node* out = make(std::move(v));
  if (track({x})) {
    out->needs_grad = true;
    out->backprop = [out, x]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->grad.rows(); ++i)
        for (std::size_t j = 0; j < x->grad.cols(); ++j) {
          double y = out->value(i, j);
          x->grad(i, j) += out->grad(i, j) * (1.0 - y * y);
        }
    };
  }
  return out;
}

Node* Tape::gather_rows(Node* table, const std::vector<int>& ids) {
  Matrix v(ids.size(), table->cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table->rows())
      throw std::out_of_range("gather_rows: id out of range");
    for (std::size_t j = 0; j < table->cols(); ++j)
      v(i, j) = table->value(static_cast<std::size_t>(ids[i]), j);
  }
  Node* out = make(std::move(v));
  if (track({table})) {
    out->needs_grad = true;
    out->backprop = [out, table, ids]() {
      table->ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < table->grad.cols(); ++j)
          table->grad(static_cast<std::size_t>(ids[i]), j) += out->grad(i, j);
    };
  }
  return out;
}

Node* Tape::where_rows(const std::vector<std::uint8_t>& take_a, Node* a, Node* b) {
  if (!a->value.same_shape(b->value) || take_a.size() != a->rows())
    throw std::invalid_argument("where_rows: shape mismatch");
  Matrix v(a->rows(), a->cols());
  for (std::size_t i = 0; i < v.rows(); ++i) {
    const double* src = take_a[i] ? a->value.row(i) : b->value.row(i);
    std::copy(src, src + v.cols(), v.row(i));
  }
  Node* out = make(std::move(v));
  if (track({a, b})) {
    out->needs_grad = true;
    out->backprop = [out, a, b, take_a]() {
      for (std::size_t i = 0; i < out->grad.rows(); ++i) {
        Node* dst = take_a[i] ? a : b;
        if (!dst->needs_grad) continue;
        dst->ensure_grad();
        for (std::size_t j = 0; j < out->grad.cols(); ++j)
          dst->grad(i, j) += out->grad(i, j);
      }
    };
  }
  return out;
}

Node* Tape::mean_rows(Node* x, const std::vector<std::uint8_t>& select) {
  if (select.size() != x->rows()) throw std::invalid_argument("mean_rows: mask length mismatch");
  std::size_t n = 0;
  for (std::uint8_t s : select) n += (s != 0);
  if (n == 0) throw std::domain_error("mean_rows: no rows selected");
  Matrix v(1, x->cols());
  for (std::size_t i = 0; i < x->rows(); ++i) {
    if (!select[i]) continue;
    for (std::size_t j = 0; j < x->cols(); ++j) v(0, j) += x->value(i, j);
  }
  v.scale_inplace(1.0 / static_cast<double>(n));
  Node* out = make(std::move(v));
  if (track({x})) {
    out->needs_grad = true;
    out->backprop = [out, x, select, n]() {
      x->ensure_grad();
      double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < x->grad.rows(); ++i) {
        if (!select[i]) continue;
        for (std::size_t j = 0; j < x->grad.cols(); ++j)
          x->grad(i, j) += inv * out->grad(0, j);
      }
    };
  }
  return out;
}

Node* Tape::dropout(Node* x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(x->rows(), x->cols());
  double inv_keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.rows(); ++i)
    for (std::size_t j = 0; j < mask.cols(); ++j) mask(i, j) = keep(rng) ? inv_keep : 0.0;
  Matrix v(x->rows(), x->cols());
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) = x->value(i, j) * mask(i, j);
  Node* out = make(std::move(v));
  if (track({x})) {
    out->needs_grad = true;
    out->backprop = [out, x, mask = std::move(mask)]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->grad.rows(); ++i)
        for (std::size_t j = 0; j < x->grad.cols(); ++j)
          x->grad(i, j) += out->grad(i, j) * mask(i, j);
    };
  }
  return out;
}

Node* Tape::bce_with_logits(Node* score, double label) {
  if (score->rows() != 1 || score->cols() != 1)
    throw std::invalid_argument("bce_with_logits: score must be 1x1");
  if (label != 0.0 && label != 1.0)
    throw std::invalid_argument("bce_with_logits: label must be 0 or 1");
  double s = score->value(0, 0);
  Matrix v(1, 1);
  v(0, 0) = stable_softplus(s) - label * s;
  Node* out = make(std::move(v));
  if (track({score})) {
    out->needs_grad = true;
    out->backprop = [out, score, label, s]() {
      score->ensure_grad();
      score->grad(0, 0) += out->grad(0, 0) * (sigmoid_scalar(s) - label);
    };
  }
  return out;
}

void Tape::backward(Node* output, double upstream) {
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  if (output->rows() != 1 || output->cols() != 1)
    throw std::invalid_argument("backward: output must be a 1x1 scalar");
  output->ensure_grad();
  output->grad(0, 0) += upstream;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (n->grad.empty()) continue;
    if (n->backprop) n->backprop();
    if (n->bound != nullptr) n->bound->grad.add_inplace(n->grad);
  }
}

}  // namespace regent::ad
