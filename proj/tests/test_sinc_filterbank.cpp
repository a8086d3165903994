#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mddkit/rng.hpp"
#include "mddkit/sinc_filterbank.hpp"

using namespace mddkit;

TEST_CASE("sinc function") {
  CHECK(sinc(0.0) == 1.0);
  CHECK(std::abs(sinc(kPi)) < 1e-12);
  CHECK(sinc(kPi / 2.0) == Catch::Approx(2.0 / kPi).epsilon(1e-12));
  CHECK(sinc(-kPi / 2.0) == Catch::Approx(2.0 / kPi).epsilon(1e-12));
}

TEST_CASE("ideal frequency response") {
  CHECK(ideal_frequency_response(300, 700, 500) == 1.0);
  CHECK(ideal_frequency_response(300, 700, 900) == 0.0);
  CHECK(ideal_frequency_response(300, 700, 100) == 0.0);
  CHECK(ideal_frequency_response(300, 700, 700) == 0.5);
  CHECK(ideal_frequency_response(300, 700, 300) == 0.5);
  CHECK_THROWS_AS(ideal_frequency_response(300, 700, -1), InputError);
  CHECK_THROWS_AS(ideal_frequency_response(700, 300, 500), ContractError);
}

TEST_CASE("degenerate band cancels to the zero kernel") {
  const auto kernel = sinc_kernel<double>(500.0, 500.0, 251, 16000);
  for (double tap : kernel.taps) CHECK(tap == 0.0);
  const auto resp = measured_frequency_response(kernel, 512, 16000);
  for (const auto& [freq, mag] : resp) CHECK(mag == 0.0);
}

TEST_CASE("center tap before windowing and normalization") {
  SincKernelRecord rec;
  sinc_kernel<double>(300.0, 700.0, 251, 16000, &rec);
  // Hamming center weight is exactly 1, so the recorded windowed center tap
  // is the raw difference-of-sincs value 2 (f2 - f1) / fs.
  CHECK(rec.windowed[125] == Catch::Approx(2.0 * 400.0 / 16000.0).epsilon(1e-15));
}

TEST_CASE("kernels are exactly even-symmetric") {
  const auto kernel = sinc_kernel<double>(300.0, 700.0, 251, 16000);
  for (int t = 0; t < 125; ++t) CHECK(kernel.taps[t] == kernel.taps[250 - t]);

  auto params = mel_initialized_filterbank<double>(8, 101, 16000);
  for (const auto& k : materialize_filters(params))
    for (int t = 0; t < 50; ++t) CHECK(k.taps[t] == k.taps[100 - t]);
}

TEST_CASE("normalized peak gain is one on the normalization grid") {
  const auto kernel = sinc_kernel<double>(300.0, 700.0, 251, 16000);
  const auto resp = measured_frequency_response(kernel, sinc_normalization_nfft(251), 16000);
  double peak = 0.0;
  for (const auto& [freq, mag] : resp) peak = std::max(peak, mag);
  CHECK(peak == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("passband peak location and stopband rejection") {
  const auto kernel = sinc_kernel<double>(300.0, 700.0, 251, 16000);
  const auto resp = measured_frequency_response(kernel, 1024, 16000);
  double peak = 0.0, peak_freq = 0.0;
  for (const auto& [freq, mag] : resp) {
    if (mag > peak) {
      peak = mag;
      peak_freq = freq;
    }
  }
  CHECK(peak_freq >= 300.0);
  CHECK(peak_freq <= 700.0);

  double stop_sum = 0.0;
  int stop_count = 0;
  for (const auto& [freq, mag] : resp) {
    if (freq < 300.0 || freq > 700.0) {
      stop_sum += mag;
      ++stop_count;
    }
  }
  CHECK(stop_sum / stop_count < 0.1 * peak);
}

TEST_CASE("well-separated passband dominates stopband by 10x") {
  const int kernel_length = 251;
  const double min_sep = 8.0 * 16000.0 / kernel_length;  // ~510 Hz
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const double f1 = rng.uniform(100.0, 4000.0);
    const double f2 = f1 + min_sep + rng.uniform(0.0, 2000.0);
    const auto kernel = sinc_kernel<double>(f1, f2, kernel_length, 16000);
    const auto resp = measured_frequency_response(kernel, 1024, 16000);
    double pass_sum = 0.0, stop_sum = 0.0;
    int pass_n = 0, stop_n = 0;
    for (const auto& [freq, mag] : resp) {
      if (freq > f1 && freq < f2) {
        pass_sum += mag;
        ++pass_n;
      } else {
        stop_sum += mag;
        ++stop_n;
      }
    }
    REQUIRE(pass_n > 0);
    REQUIRE(stop_n > 0);
    CHECK(pass_sum / pass_n >= 10.0 * (stop_sum / stop_n));
  }
}

TEST_CASE("unit impulse has flat magnitude response") {
  FilterKernel<double> impulse;
  impulse.taps.assign(15, 0.0);
  impulse.taps[7] = 1.0;
  for (const auto& [freq, mag] : measured_frequency_response(impulse, 64, 16000))
    CHECK(mag == Catch::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(measured_frequency_response(impulse, 8, 16000), ConfigError);
}

TEST_CASE("mel initialization spans the band") {
  const auto params = mel_initialized_filterbank<double>(80, 251, 16000);
  REQUIRE(params.filter_count() == 80);
  params.validate();
  for (int i = 0; i < 80; ++i) {
    const auto cut = detail::cutoffs_from_theta(params, i);
    CHECK(cut.f1 >= 0.0);
    CHECK(cut.f2 > cut.f1);
    CHECK(cut.f2 <= 8000.0);
  }
  CHECK_THROWS_AS(([] {
                    auto p = mel_initialized_filterbank<double>(4, 250, 16000);
                    materialize_filters(p);
                  })(),
                  ConfigError);  // even kernel length
}

TEST_CASE("cutoff gradients match finite differences") {
  const int kernel_length = 65;
  Rng rng(11);
  std::vector<double> upstream(kernel_length);
  for (double& u : upstream) u = rng.uniform(-1.0, 1.0);

  auto loss_at = [&](double theta_low, double theta_band) {
    SincFilterbankParams<double> p;
    p.theta_low = {theta_low};
    p.theta_band = {theta_band};
    p.kernel_length = kernel_length;
    p.sample_rate_hz = 16000;
    const auto kernels = materialize_filters(p);
    double loss = 0.0;
    for (int t = 0; t < kernel_length; ++t) loss += upstream[t] * kernels[0].taps[t];
    return loss;
  };

  // theta_band = 0 sits exactly on the |.| kink where both the analytic
  // convention (sign(0) = 0) and the symmetric central difference vanish.
  const double cases[][2] = {{300.0, 350.0}, {-300.0, 350.0}, {1200.0, 40.0},
                             {300.0, 0.0},   {50.0, 2000.0}};
  for (const auto& c : cases) {
    SincFilterbankParams<double> p;
    p.theta_low = {c[0]};
    p.theta_band = {c[1]};
    p.kernel_length = kernel_length;
    p.sample_rate_hz = 16000;
    std::vector<SincKernelRecord> records;
    materialize_filters(p, &records);
    double dlow = 0.0, dband = 0.0;
    sinc_kernel_backward(records[0], upstream.data(), kernel_length, 16000, &dlow, &dband);

    const double eps = 1e-5;
    const double fd_low = (loss_at(c[0] + eps, c[1]) - loss_at(c[0] - eps, c[1])) / (2 * eps);
    const double fd_band = (loss_at(c[0], c[1] + eps) - loss_at(c[0], c[1] - eps)) / (2 * eps);
    CHECK(std::isfinite(dlow));
    CHECK(std::isfinite(dband));
    CHECK(std::abs(dlow - fd_low) / std::max({std::abs(dlow), std::abs(fd_low), 1e-6}) < 1e-4);
    CHECK(std::abs(dband - fd_band) / std::max({std::abs(dband), std::abs(fd_band), 1e-6}) <
          1e-4);
  }
}

TEST_CASE("export format and average section") {
  SincFilterbankParams<double> p;
  p.theta_low = {300.0, 300.0};
  p.theta_band = {350.0, 350.0};  // identical filters
  p.kernel_length = 101;
  p.sample_rate_hz = 16000;

  SECTION("row count with nfft 512") {
    export_filters(p, "test_filters_512.csv", 512);
    std::ifstream f("test_filters_512.csv");
    std::string line;
    std::getline(f, line);
    CHECK(line == "filter_id,freq_hz,magnitude");
    int rows = 0;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 2 * 257 + 257);
    std::remove("test_filters_512.csv");
  }

  SECTION("identical filters: average equals the single response, peak 1") {
    // nfft = the normalization grid, where the per-filter peak is exactly 1.
    const int nfft = sinc_normalization_nfft(p.kernel_length);
    export_filters(p, "test_filters_avg.csv", nfft);
    std::ifstream f("test_filters_avg.csv");
    std::string line;
    std::getline(f, line);
    std::vector<double> filter0, average;
    while (std::getline(f, line)) {
      std::istringstream iss(line);
      std::string id, freq, mag;
      std::getline(iss, id, ',');
      std::getline(iss, freq, ',');
      std::getline(iss, mag, ',');
      if (id == "0") filter0.push_back(std::stod(mag));
      if (id == "-1") average.push_back(std::stod(mag));
    }
    REQUIRE(filter0.size() == std::size_t(nfft / 2 + 1));
    REQUIRE(average.size() == filter0.size());
    double peak = 0.0;
    for (std::size_t i = 0; i < average.size(); ++i) {
      CHECK(average[i] == Catch::Approx(filter0[i]).margin(1e-9));
      peak = std::max(peak, average[i]);
    }
    CHECK(peak == Catch::Approx(1.0).epsilon(1e-9));
    std::remove("test_filters_avg.csv");
  }
}
