#pragma once

#include "spn/augment.hpp"
#include "spn/diff.hpp"
#include "spn/em.hpp"
#include "spn/error.hpp"
#include "spn/evaluate.hpp"
#include "spn/evidence.hpp"
#include "spn/experiment.hpp"
#include "spn/graph.hpp"
#include "spn/io.hpp"
#include "spn/logmath.hpp"
#include "spn/mpe.hpp"
#include "spn/oracle.hpp"
#include "spn/rng.hpp"
#include "spn/structures.hpp"
#include "spn/validate.hpp"
