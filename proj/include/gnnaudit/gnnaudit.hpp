#pragma once

// Umbrella header: the whole toolkit in one include.

#include "gnnaudit/attack.hpp"
#include "gnnaudit/config.hpp"
#include "gnnaudit/dataset.hpp"
#include "gnnaudit/defense.hpp"
#include "gnnaudit/experiment.hpp"
#include "gnnaudit/graph.hpp"
#include "gnnaudit/matrix.hpp"
#include "gnnaudit/metrics.hpp"
#include "gnnaudit/models.hpp"
#include "gnnaudit/numerics.hpp"
#include "gnnaudit/report.hpp"
#include "gnnaudit/rng.hpp"
#include "gnnaudit/trainer.hpp"
