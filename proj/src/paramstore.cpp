#include "rectify/paramstore.hpp"

#include <stdexcept>

namespace rectify {

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

Tensor& ParamStore::at_mut(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

void ParamStore::mark_tunable(const std::string& name) {
    if (!entries.count(name)) throw std::out_of_range("cannot mark unknown parameter tunable: " + name);
    tunable.insert(name);
}

void ParamStore::check() const {
    for (const auto& name : tunable)
        if (!entries.count(name))
            throw std::logic_error("tunable name without entry: " + name);
}

const Tensor& ParamView::at(const std::string& name) const {
    if (overlay) {
        auto it = overlay->find(name);
        if (it != overlay->end()) return it->second;
    }
    return base->at(name);
}

}  // namespace rectify
