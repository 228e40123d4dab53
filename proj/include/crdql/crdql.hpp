#pragma once

#include "crdql/errors.hpp"
#include "crdql/random.hpp"
#include "crdql/topology.hpp"
#include "crdql/channel.hpp"
#include "crdql/link_adaptation.hpp"
#include "crdql/environment.hpp"
#include "crdql/qfunc.hpp"
#include "crdql/agent.hpp"
#include "crdql/oracle.hpp"
#include "crdql/harness.hpp"
