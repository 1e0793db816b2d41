#pragma once

#include "ivrobust/conditional.hpp"
#include "ivrobust/designs.hpp"
#include "ivrobust/errors.hpp"
#include "ivrobust/hac.hpp"
#include "ivrobust/invariance.hpp"
#include "ivrobust/io.hpp"
#include "ivrobust/kronecker.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/model.hpp"
#include "ivrobust/random.hpp"
#include "ivrobust/simulation.hpp"
#include "ivrobust/special.hpp"
#include "ivrobust/statistics.hpp"
