// SPDX-License-Identifier: Apache-2.0

#include "rscf/config.hpp"

#include <stdexcept>
#include <string>

namespace rscf {

namespace {
void require(bool ok, const char* field, const char* what)
{
    if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
}
}  // namespace

void SystemConfig::validate() const
{
    require(num_aps >= 1, "num_aps", "must be >= 1");
    require(num_ues >= 1, "num_ues", "must be >= 1");
    require(antennas >= 1, "antennas", "must be >= 1");
    require(tau_c >= 1, "tau_c", "must be >= 1");
    require(tau_p >= 1, "tau_p", "must be >= 1");
    require(tau_p <= tau_c, "tau_p", "must not exceed tau_c");
    require(area_side > 0.0, "area_side", "must be positive");
    require(antenna_spacing > 0.0 && antenna_spacing <= 0.5, "antenna_spacing", "must be in (0, 0.5]");
    require(clusters >= 1, "clusters", "must be >= 1");
    require(asd_deg >= 0.0, "asd_deg", "must be nonnegative");
    require(!std::isnan(rician_db) && rician_db < HUGE_VAL, "rician_db", "must be finite or -inf");
    require(shadow_sigma_db >= 0.0, "shadow_sigma_db", "must be nonnegative");
}

}  // namespace rscf
