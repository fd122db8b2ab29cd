#pragma once

#include "pqtwin/error.hpp"
#include "pqtwin/types.hpp"
#include "pqtwin/signalgen.hpp"
#include "pqtwin/netmodel.hpp"
#include "pqtwin/loads.hpp"
#include "pqtwin/simulator.hpp"
#include "pqtwin/flicker.hpp"
#include "pqtwin/pqmetrics.hpp"
#include "pqtwin/csv.hpp"
#include "pqtwin/workbench.hpp"
