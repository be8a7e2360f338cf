#ifndef HARDBALL_HARDBALL_HPP
#define HARDBALL_HARDBALL_HPP

#include "hardball/core.hpp"
#include "hardball/dynamics.hpp"
#include "hardball/neutral.hpp"
#include "hardball/probe.hpp"
#include "hardball/symbolic.hpp"
#include "hardball/tangent.hpp"

#endif
