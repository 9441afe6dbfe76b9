#pragma once

#include "mpflex/instance_io.hpp"
#include "mpflex/market.hpp"
#include "mpflex/mplp.hpp"

#include <string>
#include <vector>

namespace fixtures {

std::string path(const std::string& name);

mpflex::MarketInstance five_bus();
mpflex::MarketInstance degenerate();
mpflex::MarketInstance sixty_nine_bus();

/// Deterministic randomized suite: 10 small corner-feasible instances with
/// parameter dimension 2 or 3, several of them with binding line limits.
std::vector<mpflex::MarketInstance> random_suite();

/// Line flows for a given elastic adjustment vector (ordering of
/// instance.elastic_users()).
mpflex::VectorXd line_flows(const mpflex::MarketInstance& inst, const mpflex::MatrixXd& ptdf,
                            const mpflex::VectorXd& delta_d, const mpflex::VectorXd& theta);

/// All corners of the instance's theta box.
std::vector<mpflex::VectorXd> theta_corners(const mpflex::MarketInstance& inst);

}  // namespace fixtures
