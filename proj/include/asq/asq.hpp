#pragma once

#include "asq/access.hpp"
#include "asq/backends.hpp"
#include "asq/compose.hpp"
#include "asq/errors.hpp"
#include "asq/estimators.hpp"
#include "asq/histogram.hpp"
#include "asq/io.hpp"
#include "asq/ledger.hpp"
#include "asq/median.hpp"
#include "asq/numeric.hpp"
#include "asq/party.hpp"
#include "asq/pauli.hpp"
#include "asq/protocol.hpp"
#include "asq/relative_estimate.hpp"
#include "asq/rng.hpp"
#include "asq/states.hpp"
#include "asq/transport.hpp"
