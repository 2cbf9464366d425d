#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace fetalsep::nn {

/// A named parameter array with its gradient and Nadam moments.
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;

  std::size_t size() const { return value.size(); }
};

/// Insertion-ordered collection of parameters. Indices returned by add() stay
/// valid for the lifetime of the store, including across copies.
class ParamStore {
 public:
  std::size_t add(const std::string& name, std::vector<std::size_t> shape);

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace fetalsep::nn
