#pragma once

#include "mlasdi/autoencoder.hpp"
#include "mlasdi/config.hpp"
#include "mlasdi/data.hpp"
#include "mlasdi/errors.hpp"
#include "mlasdi/gp.hpp"
#include "mlasdi/latent_dynamics.hpp"
#include "mlasdi/matrix.hpp"
#include "mlasdi/metrics.hpp"
#include "mlasdi/model_io.hpp"
#include "mlasdi/rng.hpp"
#include "mlasdi/rom.hpp"
