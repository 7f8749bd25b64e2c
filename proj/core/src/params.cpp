#include "mrm/params.hpp"

#include <cmath>
#include <stdexcept>

namespace mrm::ad {

std::size_t ParameterSet::add(std::string name, Tensor value) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    return std::nullopt;
}

ParameterSet ParameterSet::zeros_like() const {
    ParameterSet out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor(values_[i].shape(), 0.0));
    return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
        if (names_[i] != other.names_[i] || values_[i].shape() != other.values_[i].shape()) return false;
    return true;
}

void ParameterSet::add_inplace(const ParameterSet& other) {
    if (!same_layout(other)) throw std::invalid_argument("ParameterSet::add_inplace: layout mismatch");
    for (std::size_t i = 0; i < size(); ++i) values_[i].add_inplace(other.values_[i]);
}

void ParameterSet::scale_inplace(double factor) {
    for (Tensor& t : values_)
        for (double& x : t.data()) x *= factor;
}

void ParameterSet::fill(double value) {
    for (Tensor& t : values_) t.fill(value);
}

double ParameterSet::squared_norm() const {
    double total = 0.0;
    for (const Tensor& t : values_)
        for (double x : t.data()) total += x * x;
    return total;
}

std::size_t ParameterSet::element_count() const {
    std::size_t n = 0;
    for (const Tensor& t : values_) n += t.size();
    return n;
}

AdamState::AdamState(const ParameterSet& params, AdamConfig cfg)
    : config(cfg), first_moment(params.zeros_like()), second_moment(params.zeros_like()) {}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state) {
    if (!params.same_layout(grads) || !params.same_layout(state.first_moment))
        throw std::invalid_argument("adam_step: parameter, gradient and state layouts differ");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!grads[i].all_finite())
            throw std::domain_error("adam_step: non-finite gradient for '" + grads.name(i) + "'");

    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(c.beta1, t);
    const double corr2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        const auto g = grads[i].data();
        auto m = state.first_moment[i].data();
        auto v = state.second_moment[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double m_hat = m[j] / corr1;
            const double v_hat = v[j] / corr2;
            p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

}  // namespace mrm::ad
