#include <algorithm>
#include <cmath>
#include <random>

#include "tsf/data.hpp"

namespace tsf {

std::uint64_t trip_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 finalizer over (seed, index).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return trip_seed(root ^ h, 0);
}

namespace {

constexpr double kDt = 0.1;          // s
constexpr double kMass = 1400.0;     // kg
constexpr double kGravity = 9.81;
constexpr double kDragArea = 0.7;    // 0.5 * rho * Cd * A, kg/m
constexpr double kRolling = 0.011;
constexpr double kDriveEfficiency = 0.9;
constexpr double kRegenEfficiency = 0.6;
constexpr double kMaxTractionForce = 6000.0;  // N at full throttle
constexpr double kInternalResistance = 0.1;  // ohm
constexpr double kThermalTau = 600.0;        // s
constexpr double kThermalGain = 0.5;         // K per kW of sustained draw
constexpr double kCabinTau = 300.0;          // s

TripSeries synthesize_one(std::size_t length, std::uint64_t seed, const SynthOptions& opt, std::size_t index) {
  std::mt19937_64 rng(seed);
  std::mt19937_64 noise_rng(seed ^ 0x5DEECE66Dull);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::normal_distribution<double> sensor(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

  const double ambient0 = between(-5.0, 35.0);
  const double setpoint = between(19.0, 24.0);
  const double soc0 = between(45.0, 95.0);
  double batt_temp = ambient0 + between(0.0, 3.0);
  double cabin = ambient0;
  double elevation = between(0.0, 600.0);
  double grade = 0.0;
  double speed = 0.0, target_speed = 0.0, segment_left = 0.0;
  double heater_walk = 0.0, ac_walk = 0.0;
  // Relative offsets of the four vent sensors around the common vent temperature.
  const double vent_offset[4] = {between(-5e-5, 5e-5), between(-5e-5, 5e-5), between(-5e-5, 5e-5),
                                 between(-5e-5, 5e-5)};

  std::vector<double> vel(length), acc(length), thr(length), elev(length), amb(length), volt(length), cur(length),
      btemp(length), soc(length), heat(length), ac(length), cab(length), setp(length), regen(length);
  std::vector<std::vector<double>> vents(4, std::vector<double>(length));

  double soc_now = soc0;
  for (std::size_t i = 0; i < length; ++i) {
    // Drive cycle: piecewise speed targets tracked by a rate-limited lag.
    if (!opt.stationary) {
      segment_left -= kDt;
      if (segment_left <= 0.0) {
        segment_left = between(20.0, 90.0);
        target_speed = uni(rng) < 0.2 ? 0.0 : between(5.0, 33.0);
      }
      const double dv = std::clamp((target_speed - speed) / 6.0, -2.5, 2.0) * kDt;
      speed = std::max(0.0, speed + dv);
    }
    vel[i] = speed;
    // Backward difference; the first sample has no predecessor.
    acc[i] = i == 0 ? 0.0 : (vel[i] - vel[i - 1]) / kDt;

    grade = std::clamp(grade + kDt * (-grade / 60.0) + 0.0015 * std::sqrt(kDt) * gauss(rng), -0.06, 0.06);
    elevation += vel[i] * grade * kDt;
    elev[i] = elevation;
    amb[i] = ambient0 + 0.5 * std::sin(static_cast<double>(i) * kDt / 900.0 + static_cast<double>(index));

    const double force = kMass * acc[i] + kDragArea * vel[i] * vel[i] + (vel[i] > 0 ? kMass * kGravity * kRolling : 0.0) +
                         kMass * kGravity * grade * (vel[i] > 0 ? 1.0 : 0.0);
    const double p_traction = force * vel[i];
    const double p_drive = p_traction >= 0 ? p_traction / kDriveEfficiency : p_traction * kRegenEfficiency;
    thr[i] = std::clamp(100.0 * std::max(0.0, force) / kMaxTractionForce, 0.0, 100.0) * (vel[i] > 0 ? 1.0 : 0.0);
    regen[i] = std::max(0.0, -p_drive);

    // Heating circuit: demand proportional to the set-point gap plus slow walks.
    heater_walk += kDt * (-heater_walk / 120.0) + 8.0 * std::sqrt(kDt) * gauss(rng);
    ac_walk += kDt * (-ac_walk / 120.0) + 8.0 * std::sqrt(kDt) * gauss(rng);
    const double gap = setpoint - amb[i];
    heat[i] = gap > 0 ? std::clamp(250.0 * gap + heater_walk, 0.0, 5000.0) : 0.0;
    ac[i] = gap < 0 ? std::clamp(-200.0 * gap + ac_walk, 0.0, 4000.0) : 0.0;
    cabin += kDt * (setpoint - cabin) / kCabinTau;
    cab[i] = cabin;
    setp[i] = setpoint;
    const double vent = cabin + 0.004 * heat[i] - 0.004 * ac[i];
    for (int k = 0; k < 4; ++k) vents[static_cast<std::size_t>(k)][i] = vent * (1.0 + vent_offset[k]);

    const double p_batt = p_drive + heat[i] + ac[i];  // W
    if (i > 0) soc_now -= p_batt * kDt / (kPackEnergyWh * 3600.0) * 100.0;
    soc[i] = soc_now;
    const double ocv = 320.0 + 0.8 * soc_now;
    cur[i] = p_batt / ocv;
    volt[i] = ocv - kInternalResistance * cur[i];
    // First-order thermal lag driven by the magnitude of the power draw.
    if (i > 0) batt_temp += kDt * (amb[i] + kThermalGain * std::abs(p_batt) / 1000.0 - batt_temp) / kThermalTau;
    btemp[i] = batt_temp;
  }

  TripSeries trip;
  trip.trip_id = "trip_" + std::string(index < 10 ? "00" : index < 100 ? "0" : "") + std::to_string(index);
  trip.sample_period_s = kDt;
  struct Channel {
    const char* name;
    std::vector<double>* values;
    double noise;
  };
  const Channel channels[] = {
      {"velocity", &vel, 0.1},
      {"acceleration", &acc, 0.2},
      {"throttle", &thr, 0.5},
      {"elevation", &elev, 0.2},
      {"ambient_temp", &amb, 0.05},
      {"battery_voltage", &volt, 0.3},
      {"battery_current", &cur, 0.5},
      {"battery_temp", &btemp, 0.05},
      {"soc", &soc, 0.02},
      {"heater_power", &heat, 20.0},
      {"ac_power", &ac, 20.0},
      {"vent_temp_right", &vents[0], 0.01},
      {"vent_temp_central_right", &vents[1], 0.01},
      {"vent_temp_central_left", &vents[2], 0.01},
      {"vent_temp_left", &vents[3], 0.01},
      {"cabin_temp", &cab, 0.05},
      {"cabin_setpoint", &setp, 0.01},
      {"regen_power", &regen, 20.0},
  };
  for (const auto& ch : channels) {
    if (opt.noise_scale > 0.0) {
      for (auto& v : *ch.values) v += opt.noise_scale * ch.noise * sensor(noise_rng);
    }
    trip.set(ch.name, std::move(*ch.values));
  }
  return trip;
}

}  // namespace

std::vector<TripSeries> synthesize_trips(std::size_t n_trips, std::size_t length, std::uint64_t seed,
                                         const SynthOptions& options) {
  std::vector<TripSeries> trips;
  trips.reserve(n_trips);
  for (std::size_t i = 0; i < n_trips; ++i) trips.push_back(synthesize_one(length, trip_seed(seed, i), options, i));
  return trips;
}

}  // namespace tsf
