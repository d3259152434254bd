#pragma once

#include "nmdr/random.hpp"
#include "nmdr/types.hpp"
#include "nmdr/sticks.hpp"
#include "nmdr/simulate.hpp"
#include "nmdr/spectral.hpp"
#include "nmdr/chain.hpp"
#include "nmdr/predict.hpp"
#include "nmdr/io.hpp"
#include "nmdr/checkpoint.hpp"
#include "nmdr/experiment.hpp"
