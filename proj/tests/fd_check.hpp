#pragma once

// Central finite-difference gradient checking against the reverse-mode graph.
// Shared by the unit suite and the acceptance gate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "rulkit/autodiff.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tensor.hpp"

namespace fd {

struct Report {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

// Checks d loss / d leaf for every element of every leaf. loss_fn must
// rebuild the graph from the leaves' current values on each call.
inline Report check(const std::vector<rulkit::ad::Var>& leaves,
                    const std::function<rulkit::ad::Var()>& loss_fn, double step = 1e-6) {
    Report rep;
    for (const auto& leaf : leaves) leaf->zero_grad();
    rulkit::ad::backward(loss_fn());
    std::vector<rulkit::Tensor> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf->grad);

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& value = leaves[li]->value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double x0 = value[i];
            value[i] = x0 + step;
            const double plus = loss_fn()->value[0];
            value[i] = x0 - step;
            const double minus = loss_fn()->value[0];
            value[i] = x0;
            const double fdiff = (plus - minus) / (2.0 * step);
            const double an = analytic[li][i];
            // The 1e-2 floor turns the check absolute (tolerance * 1e-2) for
            // elements whose true gradient is below that scale; otherwise
            // central-difference rounding noise (~|loss| * eps / step) would
            // dominate the ratio for near-zero gradients.
            const double rel =
                std::abs(fdiff - an) / std::max({std::abs(fdiff), std::abs(an), 1e-2});
            rep.max_rel = std::max(rep.max_rel, rel);
            ++rep.checked;
        }
    }
    return rep;
}

// Standard-normal entries; a positive margin keeps |x| >= margin so kinked
// operations (relu, abs, shrinkage) are probed away from their corners.
inline rulkit::Tensor rand_tensor(std::vector<std::size_t> shape, rulkit::Rng& rng,
                                  double margin = 0.0) {
    rulkit::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = rng.normal();
        if (margin > 0.0) v = (v < 0.0 ? -1.0 : 1.0) * (margin + std::abs(v));
        t[i] = v;
    }
    return t;
}

}  // namespace fd
