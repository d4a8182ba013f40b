#include "faithmate/backend.hpp"

#include <cmath>

#include "faithmate/error.hpp"

namespace faithmate {

void ChoiceDistribution::validate() const {
    if (probs.empty()) throw validation_error("choice distribution: empty");
    double sum = 0.0;
    for (const auto& [label, p] : probs) {
        if (!std::isfinite(p) || p < 0.0)
            throw validation_error("choice distribution: bad probability for " + label);
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw validation_error("choice distribution: probabilities sum to " +
                               std::to_string(sum));
}

std::string ChoiceDistribution::argmax() const {
    if (probs.empty()) throw validation_error("choice distribution: empty");
    auto best = probs.begin();
    for (auto it = std::next(probs.begin()); it != probs.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

double ChoiceDistribution::at(const std::string& label) const {
    auto it = probs.find(label);
    if (it == probs.end())
        throw contract_error("choice distribution: unknown label " + label);
    return it->second;
}

ParamDelta ParamDelta::negated() const {
    ParamDelta out;
    out.base_fingerprint = base_fingerprint;
    out.entries = entries;
    for (auto& [name, m] : out.entries)
        for (auto& v : m.data) v = -v;
    return out;
}

} // namespace faithmate
