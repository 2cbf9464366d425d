#include "fetalsep/nn/param_store.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "fetalsep/error.hpp"

namespace fetalsep::nn {

std::size_t ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (index_.count(name)) throw Error(ErrorCode::BadConfig, "duplicate parameter '" + name + "'");
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  params_.push_back({name, std::move(shape), std::vector<double>(n, 0.0),
                     std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                     std::vector<double>(n, 0.0)});
  index_[name] = params_.size() - 1;
  return params_.size() - 1;
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::BadConfig, "unknown parameter '" + name + "'");
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::BadConfig, "unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

}  // namespace fetalsep::nn
