#include "cbc/tensor.hpp"

#include <cmath>

namespace cbc {

bool Tensor4::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace cbc
