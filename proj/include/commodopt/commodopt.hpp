#pragma once

#include "commodopt/black.hpp"
#include "commodopt/calibration.hpp"
#include "commodopt/errors.hpp"
#include "commodopt/gl2.hpp"
#include "commodopt/levy.hpp"
#include "commodopt/mjd.hpp"
#include "commodopt/payoff.hpp"
