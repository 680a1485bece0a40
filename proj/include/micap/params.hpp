#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "micap/tensor.hpp"

namespace micap {

// Named, ordered collection of trainable tensors. Registration order defines
// the checkpoint manifest order and is therefore part of the persisted format.
class ParamStore {
public:
    Tensor add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw ConfigError("ParamStore: duplicate parameter " + name);
        t.node()->requires_grad = true;
        index_[name] = items_.size();
        items_.emplace_back(name, t);
        return t;
    }

    Tensor randn(Rng& rng, const std::string& name, std::vector<int> shape, double stddev) {
        return add(name, Tensor::randn(rng, std::move(shape), stddev));
    }
    Tensor zeros(const std::string& name, std::vector<int> shape) {
        return add(name, Tensor::zeros(std::move(shape)));
    }
    Tensor ones(const std::string& name, std::vector<int> shape) {
        return add(name, Tensor::filled(std::move(shape), 1.0));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
        return items_[it->second].second;
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    size_t count() const { return items_.size(); }

    int64_t total_values() const {
        int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : items_) t.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace micap
