#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrm/tensor.hpp"

namespace mrm::ad {

/// Ordered collection of named tensors (model weights or their gradients).
class ParameterSet {
public:
    std::size_t add(std::string name, Tensor value);

    std::size_t size() const noexcept { return values_.size(); }
    Tensor& operator[](std::size_t i) { return values_[i]; }
    const Tensor& operator[](std::size_t i) const { return values_[i]; }
    const std::string& name(std::size_t i) const { return names_[i]; }
    std::optional<std::size_t> find(std::string_view name) const;

    /// Same names and shapes, all values zero.
    ParameterSet zeros_like() const;
    bool same_layout(const ParameterSet& other) const;
    void add_inplace(const ParameterSet& other);
    void scale_inplace(double factor);
    void fill(double value);
    double squared_norm() const;
    std::size_t element_count() const;

    friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment estimates for Adam; shaped like the parameter set they were built from.
struct AdamState {
    AdamConfig config;
    std::size_t step = 0;
    ParameterSet first_moment;
    ParameterSet second_moment;

    AdamState() = default;
    AdamState(const ParameterSet& params, AdamConfig cfg);
};

/// One bias-corrected Adam update. Throws std::domain_error on a non-finite
/// gradient, leaving parameters and state untouched.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state);

}  // namespace mrm::ad
