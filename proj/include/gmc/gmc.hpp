#pragma once

#include "gmc/error.hpp"
#include "gmc/core.hpp"
#include "gmc/random.hpp"
#include "gmc/linalg.hpp"
#include "gmc/robust.hpp"
#include "gmc/metrics.hpp"
#include "gmc/drift.hpp"
#include "gmc/taxonomy.hpp"
#include "gmc/signal.hpp"
#include "gmc/chains.hpp"
#include "gmc/acoustic.hpp"
#include "gmc/io.hpp"
#include "gmc/config.hpp"
