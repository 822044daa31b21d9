#pragma once

#include "alea/bench.hpp"
#include "alea/cli.hpp"
#include "alea/engine.hpp"
#include "alea/registry.hpp"
