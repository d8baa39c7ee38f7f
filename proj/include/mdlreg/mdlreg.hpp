#pragma once

// Umbrella header for the mdlreg library: MDL estimators built on two-stage
// codes for linear regression through random ReLU features, with the Fisher
// spectrum machinery and risk/redundancy bound evaluators.

#include "mdlreg/errors.hpp"
#include "mdlreg/rng.hpp"
#include "mdlreg/parallel.hpp"
#include "mdlreg/model.hpp"
#include "mdlreg/spectral.hpp"
#include "mdlreg/twostage.hpp"
#include "mdlreg/estimator.hpp"
#include "mdlreg/risk.hpp"
#include "mdlreg/io.hpp"
