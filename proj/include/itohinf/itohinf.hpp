#pragma once

#include "itohinf/errors.hpp"
#include "itohinf/symlin.hpp"
#include "itohinf/model.hpp"
#include "itohinf/gare_newton.hpp"
#include "itohinf/sde.hpp"
#include "itohinf/datamat.hpp"
#include "itohinf/offpolicy.hpp"
#include "itohinf/robust.hpp"
#include "itohinf/io.hpp"
#include "itohinf/config.hpp"
