#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "restoregrad/autodiff.hpp"

namespace restoregrad {

struct ParamArray {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

// Ordered collection of named dense parameter arrays.
class ParamStore {
 public:
  void add(std::string name, ad::Shape shape, std::vector<double> values);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  ParamArray& at(const std::string& name);
  const ParamArray& at(const std::string& name) const;

  std::vector<ParamArray>& arrays() { return arrays_; }
  const std::vector<ParamArray>& arrays() const { return arrays_; }

  // Total scalar count.
  std::size_t count() const;

  // Rounds every value to the nearest 32-bit float.
  void round_to_float();

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<ParamArray> arrays_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Puts a store's arrays on a tape. Trainable bindings create named leaves
// "<prefix>/<array name>" so gradients come back keyed by that name; frozen
// bindings create constants. Each array is placed on the tape once.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamStore& store, std::string prefix, bool trainable)
      : tape_(tape), store_(store), prefix_(std::move(prefix)), trainable_(trainable) {}

  ad::Tensor operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }
  const std::string& prefix() const { return prefix_; }

 private:
  ad::Tape& tape_;
  const ParamStore& store_;
  std::string prefix_;
  bool trainable_;
  std::unordered_map<std::string, ad::Tensor> bound_;
};

}  // namespace restoregrad
