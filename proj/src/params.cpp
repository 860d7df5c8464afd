#include "restoregrad/params.hpp"

#include "restoregrad/error.hpp"

namespace restoregrad {

void ParamStore::add(std::string name, ad::Shape shape, std::vector<double> values) {
  if (values.size() != ad::numel(shape))
    throw ShapeError("parameter " + name + ": value count does not match shape");
  if (contains(name)) throw Error("duplicate parameter " + name);
  index_[name] = arrays_.size();
  arrays_.push_back({std::move(name), std::move(shape), std::move(values)});
}

ParamArray& ParamStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter " + name);
  return arrays_[it->second];
}

const ParamArray& ParamStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter " + name);
  return arrays_[it->second];
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += a.values.size();
  return n;
}

void ParamStore::round_to_float() {
  for (auto& a : arrays_)
    for (double& v : a.values) v = static_cast<double>(static_cast<float>(v));
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (arrays_.size() != other.arrays_.size()) return false;
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    const auto& a = arrays_[i];
    const auto& b = other.arrays_[i];
    if (a.name != b.name || a.shape != b.shape || a.values != b.values) return false;
  }
  return true;
}

ad::Tensor ParamBinding::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const ParamArray& p = store_.at(name);
  ad::Tensor t = trainable_ ? tape_.variable(prefix_ + "/" + name, p.shape, p.values)
                            : tape_.constant(p.shape, p.values);
  bound_.emplace(name, t);
  return t;
}

}  // namespace restoregrad
