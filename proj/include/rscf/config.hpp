// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_CONFIG_HPP
#define RSCF_CONFIG_HPP

#include <complex>
#include <cstdint>
#include <Eigen/Dense>

namespace rscf {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// System-level parameters of one cell-free deployment. Powers are kept in
// dBm here; the *_mw() accessors are the only place they become linear.
struct SystemConfig {
    int num_aps = 20;              // L
    int num_ues = 4;               // K
    int antennas = 4;              // N per AP
    int tau_c = 200;               // channel uses per coherence block
    int tau_p = 2;                 // pilot length
    double area_side = 500.0;      // meters
    double antenna_spacing = 0.5;  // d_H in wavelengths
    int clusters = 6;              // N_c scattering clusters per link
    double asd_deg = 15.0;         // angular standard deviation
    double rician_db = 5.0;        // K-bar in dB, -inf gives Rayleigh
    double pilot_dbm = 20.0;
    double downlink_dbm = 23.0;
    double noise_dbm = -96.0;
    bool shadowing = false;
    double shadow_sigma_db = 8.0;
    bool random_pilots = false;    // fully random instead of balanced
    std::uint64_t seed = 1;

    // Throws std::invalid_argument naming the violated field.
    void validate() const;

    double pilot_mw() const { return dbm_to_mw(pilot_dbm); }
    double downlink_mw() const { return dbm_to_mw(downlink_dbm); }
    double noise_mw() const { return dbm_to_mw(noise_dbm); }
    double rician_linear() const { return db_to_linear(rician_db); }
    double prelog() const { return double(tau_c - tau_p) / double(tau_c); }
    int num_links() const { return num_aps * num_ues; }
};

}  // namespace rscf

#endif
