#include "cbc/optim.hpp"

#include <cmath>

#include "cbc/errors.hpp"

namespace cbc {

void AdamState::step(std::span<const ParamSlice> slices) {
    std::size_t total = 0;
    for (const ParamSlice& s : slices) {
        if (s.value.size() != s.grad.size())
            throw ShapeError("adam: value/grad slice size mismatch");
        total += s.value.size();
    }
    if (m_.empty()) {
        m_.assign(total, 0.0);
        v_.assign(total, 0.0);
    } else if (m_.size() != total) {
        throw ShapeError("adam: parameter layout changed between steps");
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    std::size_t off = 0;
    for (const ParamSlice& s : slices) {
        for (std::size_t i = 0; i < s.value.size(); ++i, ++off) {
            const double g = s.grad[i];
            m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g;
            v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[off] / bc1;
            const double vhat = v_[off] / bc2;
            s.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace cbc
