#pragma once

#include "slscan/parallel.hpp"
#include "slscan/covariance.hpp"
#include "slscan/scoring.hpp"
#include "slscan/windows.hpp"
#include "slscan/detector.hpp"
#include "slscan/evaluation.hpp"
#include "slscan/simulation.hpp"
#include "slscan/ingest.hpp"
#include "slscan/report.hpp"
