#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "regent/matrix.hpp"

namespace regent::ad {

// A named learnable tensor. Gradients accumulate across tapes until zero_grad().
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
};

// Owns parameters with stable addresses; iteration order is insertion order,
// which keeps optimizer updates and checkpoints deterministic.
class ParamSet {
 public:
  Parameter& add(const std::string& name, Matrix init, bool trainable = true);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::size_t count() const { return items_.size(); }
  Parameter& operator[](std::size_t i) { return *items_[i]; }
  const Parameter& operator[](std::size_t i) const { return *items_[i]; }

  void zero_grad();
  std::size_t scalar_count() const;

  // Deep copy of values (for checkpointing best-epoch weights).
  std::vector<Matrix> snapshot_values() const;
  void restore_values(const std::vector<Matrix>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
};

struct Node {
  Matrix value;
  Matrix grad;  // allocated on demand during backward
  std::function<void()> backprop;
  Parameter* bound = nullptr;
  bool needs_grad = false;

  std::size_t rows() const { return value.rows(); }
  std::size_t cols() const { return value.cols(); }
  void ensure_grad() {
    if (grad.empty() && !value.empty()) grad = Matrix::zeros(value.rows(), value.cols());
  }
};

// Records a forward computation; backward() replays it in reverse.
// With recording == false the ops compute values only, which keeps
// finite-difference sweeps cheap.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Node* constant(Matrix value);
  Node* param(Parameter& p);

  Node* matmul(Node* a, Node* b, bool trans_a = false, bool trans_b = false);
  Node* add(Node* a, Node* b);
  Node* sub(Node* a, Node* b);
  Node* mul(Node* a, Node* b);
  Node* add_rowvec(Node* a, Node* row);            // row: [1 x c]
  Node* mul_colvec(Node* a, Node* col);            // col: [r x 1]
  Node* scale(Node* a, double c);
  Node* mul_scalar(Node* a, Node* s);              // s: [1 x 1]
  Node* concat_cols(Node* a, Node* b);
  Node* slice_cols(Node* a, std::size_t first, std::size_t width);
  Node* row_sum(Node* a);                          // [r x 1]
  Node* softmax_rows(Node* a, const std::vector<std::uint8_t>* key_mask = nullptr);
  Node* layer_norm_rows(Node* x, Node* gain, Node* bias, double eps = 1e-5);
  Node* gelu(Node* x);
  Node* sigmoid(Node* x);
  Node* tanh_act(Node* x);
  Node* gather_rows(Node* table, const std::vector<int>& ids);
  Node* where_rows(const std::vector<std::uint8_t>& take_a, Node* a, Node* b);
  Node* mean_rows(Node* x, const std::vector<std::uint8_t>& select);
  Node* dropout(Node* x, double rate, std::mt19937_64& rng);
  Node* bce_with_logits(Node* score, double label);  // score: [1 x 1]

  // Seeds the scalar output with `upstream` and sweeps the tape in reverse.
  // Bound parameters receive accumulated gradients.
  void backward(Node* output, double upstream = 1.0);

 private:
  Node* make(Matrix value);
  bool track(std::initializer_list<Node*> parents) const;

  bool recording_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace regent::ad
