// Generates the bundled housing benchmark fixture: 506 rows, 13 features,
// hedonic-style price with nonlinear effects, interactions and noise.
// Deterministic; the repository ships the output at data/housing.csv.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "star/rng.hpp"

namespace {

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

int main(int argc, char** argv) {
    const char* path = argc > 1 ? argv[1] : "data/housing.csv";
    std::FILE* out = std::fopen(path, "w");
    if (!out) {
        std::cerr << "cannot write " << path << "\n";
        return 1;
    }
    std::fprintf(out,
                 "crime_rate,residential_zone,industry_share,river_adjacent,nox_level,"
                 "avg_rooms,built_before_1940_pct,employment_distance,highway_access,"
                 "tax_rate,pupil_teacher_ratio,amenity_index,lower_status_pct,price\n");

    star::Rng rng(20240117);
    const int rows = 506;
    for (int i = 0; i < rows; ++i) {
        const double u = rng.normal();  // shared neighborhood factor

        const double crime = clamp(0.35 * std::exp(0.8 * u + rng.normal(0.0, 0.9)), 0.005, 90.0);
        const double zone = (u < -0.5 && rng.bernoulli(0.6))
                                ? 5.0 * std::floor(rng.uniform(2.0, 20.0))
                                : 0.0;
        const double industry = clamp(11.0 + 5.5 * u + rng.normal(0.0, 4.0), 0.5, 27.0);
        const double river = rng.bernoulli(0.07) ? 1.0 : 0.0;
        const double nox = clamp(0.55 + 0.09 * u + rng.normal(0.0, 0.06), 0.38, 0.87);
        const double rooms = clamp(6.3 - 0.35 * u + rng.normal(0.0, 0.6), 3.8, 8.8);
        const double age = clamp(68.0 + 14.0 * u + rng.normal(0.0, 20.0), 2.0, 100.0);
        const double dist = clamp(std::exp(1.25 - 0.35 * u + rng.normal(0.0, 0.4)), 1.1, 12.0);
        const double highway = u > 0.8 ? 24.0
                                       : std::round(clamp(5.0 + 3.0 * u + rng.normal(0.0, 3.0),
                                                          1.0, 12.0));
        const double tax = u > 0.8 ? 666.0
                                   : std::round(clamp(330.0 + 60.0 * u + rng.normal(0.0, 90.0),
                                                      187.0, 711.0));
        const double ptratio = clamp(18.5 + 1.3 * u + rng.normal(0.0, 1.8), 12.6, 22.0);
        const double amenity = rng.normal() - 0.3 * u;
        const double lstat = clamp(std::exp(2.4 + 0.45 * u + rng.normal(0.0, 0.35)), 1.7, 38.0);

        double price = 22.0;
        price += 6.5 * (rooms - 6.3) + 1.1 * (rooms - 6.3) * (rooms - 6.3);
        price += -9.5 * std::log(lstat / 11.0);
        price += -0.28 * std::min(crime, 25.0);
        price += -22.0 * (nox - 0.55) * (industry / 27.0 + 0.3);
        price += -0.45 * (dist - 3.5);
        price += 2.8 * river;
        price += -0.009 * (tax - 400.0);
        price += -0.65 * (ptratio - 18.5);
        price += 0.8 * amenity;
        price += 0.012 * (zone - 11.0);
        price += -0.35 * (rooms - 6.3) * (lstat - 11.0) / 5.0;
        price += rng.normal(0.0, 2.6);
        price = clamp(price, 5.0, 50.0);

        std::fprintf(out, "%.5f,%.1f,%.4f,%.0f,%.4f,%.4f,%.2f,%.4f,%.0f,%.0f,%.2f,%.4f,%.4f,%.2f\n",
                     crime, zone, industry, river, nox, rooms, age, dist, highway, tax, ptratio,
                     amenity, lstat, price);
    }
    std::fclose(out);
    std::cout << "wrote " << rows << " rows to " << path << "\n";
    return 0;
}
