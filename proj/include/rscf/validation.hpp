// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_VALIDATION_HPP
#define RSCF_VALIDATION_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rscf/monte_carlo.hpp"

namespace rscf {

struct OracleCheck {
    std::string quantity;  // first, second, upsilon4_a..e, upsilon5, common_norm, private_norm
    std::string tuple;     // e.g. "k=0 i=1 j=2 l=0" plus the instance tag
    cplx closed;
    cplx sampled;
    double stderr_ = 0.0;
    double tol = 0.0;      // relative tolerance
    bool resolvable = false;
    bool pass = false;

    double rel_err() const;
};

struct OracleReport {
    std::vector<OracleCheck> checks;
    std::map<std::string, int> resolvable;  // per quantity
    bool all_pass() const;
    // Every quantity has at least one resolvable tuple.
    bool covered() const;
};

// Compares every closed-form moment with its sample estimate over n_draws.
// A tuple is resolvable when 4 standard errors fit inside its relative
// tolerance; resolvable tuples must meet the tolerance, the others must agree
// within 4 standard errors. When the pilot pattern of cfg cannot produce
// every Upsilon4 case, a second instance with orthogonal pilots is added.
OracleReport moment_oracle_suite(const SystemConfig& cfg, std::uint64_t seed, std::size_t n_draws);

SystemConfig moment_oracle_config();

}  // namespace rscf

#endif
