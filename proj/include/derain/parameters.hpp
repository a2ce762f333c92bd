#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "derain/autograd.hpp"

namespace derain {

struct NamedParameter {
    std::string name;
    ag::Var var;
};

/// Ordered, named collection of trainable leaf tensors. Copies are deep:
/// a copied set never shares storage with its source.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet& other);
    ParameterSet& operator=(const ParameterSet& other);
    ParameterSet(ParameterSet&&) noexcept = default;
    ParameterSet& operator=(ParameterSet&&) noexcept = default;

    const ag::Var& add(std::string name, Tensor init);
    const ag::Var& get(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    /// Total number of scalars.
    std::size_t scalar_count() const;

    std::vector<NamedParameter>& entries() { return entries_; }
    const std::vector<NamedParameter>& entries() const { return entries_; }

    void zero_grad();
    void set_requires_grad(bool on);
    /// Deep copy of all values, in order.
    std::vector<Tensor> snapshot() const;

private:
    std::vector<NamedParameter> entries_;
};

/// N(0, stddev) initialisation used for all conv weights.
Tensor normal_tensor(Shape shape, float stddev, std::mt19937_64& rng);

} // namespace derain
