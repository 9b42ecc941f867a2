#pragma once

#include <map>
#include <set>
#include <string>

#include "rectify/tensor.hpp"

namespace rectify {

// Named parameter collection. tunable names the differentiable subset; the
// tape refuses gradient queries for anything outside it.
struct ParamStore {
    std::map<std::string, Tensor> entries;
    std::set<std::string> tunable;

    const Tensor& at(const std::string& name) const;
    Tensor& at_mut(const std::string& name);
    bool is_tunable(const std::string& name) const { return tunable.count(name) > 0; }
    void mark_tunable(const std::string& name);
    void check() const;  // tunable subset-of-entries invariant
};

// Read-through view: overlay entries (private, mutable per generation) shadow
// the shared read-only base store.
struct ParamView {
    const ParamStore* base = nullptr;
    const std::map<std::string, Tensor>* overlay = nullptr;

    explicit ParamView(const ParamStore& store) : base(&store) {}
    ParamView(const ParamStore& store, const std::map<std::string, Tensor>& over)
        : base(&store), overlay(&over) {}

    const Tensor& at(const std::string& name) const;
};

}  // namespace rectify
