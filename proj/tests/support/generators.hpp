#pragma once

#include <cmath>
#include <random>
#include <string>
#include <string_view>

#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/types.hpp"

namespace lanemerge::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Short string with characters JSON must escape and a non-ASCII letter.
inline std::string random_token(std::mt19937_64& rng, std::size_t max_len = 12) {
    static constexpr std::string_view kChars = "abcdefghijklmnopqrstuvwxyz0123456789._-@ \"\\/";
    const std::size_t n = 1 + rng() % max_len;
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng() % 16 == 0) {
            s += "\xc3\xa9";
        } else {
            s.push_back(kChars[rng() % kChars.size()]);
        }
    }
    return s;
}

inline Rud random_rud(std::mt19937_64& rng) {
    Rud r;
    r.uuid = Uuid::generate(rng);
    r.source = static_cast<Source>(rng() % 3);
    r.timestamp = 1 + static_cast<Millis>(rng() % 2'000'000'000'000ULL);
    r.position = {uniform(rng, -1e4, 1e4), uniform(rng, -50, 50)};
    r.speed = uniform(rng, 0, 60);
    r.acceleration = uniform(rng, -8, 8);
    r.heading = uniform(rng, 0, kTwoPi);
    if (r.heading >= kTwoPi) r.heading = 0.0;
    r.length = uniform(rng, 0.5, 20);
    r.width = uniform(rng, 0.5, 3);
    if (rng() % 2) r.lane = static_cast<int>(rng() % 9) - 1;
    r.connected = rng() % 2;
    return r;
}

inline V2XEnvelope random_envelope(std::mt19937_64& rng) {
    V2XEnvelope e;
    e.topic = random_token(rng);
    e.sender = random_token(rng);
    e.seq = rng();
    e.sent_at = 1 + static_cast<Millis>(rng() % 2'000'000'000'000ULL);
    switch (rng() % 5) {
        case 0: e.payload = random_rud(rng); break;
        case 1: {
            TrajectoryRecommendation t;
            t.recommendation_id = Uuid::generate(rng);
            t.target_uuid = Uuid::generate(rng);
            t.created_at = 1 + static_cast<Millis>(rng() % 1'000'000);
            t.origin_rud_timestamp = 1 + static_cast<Millis>(rng() % 1'000'000);
            Millis ts = static_cast<Millis>(rng() % 1000);
            const std::size_t n = 1 + rng() % 20;
            for (std::size_t i = 0; i < n; ++i) {
                ts += 1 + static_cast<Millis>(rng() % 200);
                t.waypoints.push_back({ts, {uniform(rng, -500, 500), uniform(rng, -10, 10)}, uniform(rng, 0, 40),
                                       uniform(rng, -5, 5)});
            }
            e.payload = t;
            break;
        }
        case 2:
            e.payload = ManeuverFeedback{Uuid::generate(rng), Uuid::generate(rng), static_cast<Verdict>(rng() % 3),
                                         1 + static_cast<Millis>(rng() % 1'000'000)};
            break;
        case 3: {
            LogRecord l{random_token(rng), random_token(rng), random_token(rng),
                        1 + static_cast<Millis>(rng() % 1'000'000), {}};
            const std::size_t n = rng() % 5;
            for (std::size_t i = 0; i < n; ++i) {
                const auto key = random_token(rng, 6);
                switch (rng() % 4) {
                    case 0: l.attributes[key] = random_token(rng); break;
                    case 1: l.attributes[key] = static_cast<std::int64_t>(rng()); break;
                    case 2: l.attributes[key] = uniform(rng, -1e6, 1e6); break;
                    default: l.attributes[key] = static_cast<bool>(rng() % 2); break;
                }
            }
            e.payload = l;
            break;
        }
        default: {
            SubscribeRequest s;
            s.action = static_cast<SubscribeAction>(rng() % 4);
            s.role = static_cast<ClientRole>(rng() % 5);
            s.topic = random_token(rng);
            if (rng() % 2) {
                const double x = uniform(rng, -100, 100), y = uniform(rng, -10, 10);
                s.bound = BoundingBox{{x, y}, {x + uniform(rng, 0, 50), y + uniform(rng, 0, 5)}};
            }
            e.payload = s;
            break;
        }
    }
    return e;
}

/// Closed-form uniformly accelerated motion with a stop under braking,
/// written independently of the library's integrator.
inline Vec2 closed_form_position(Vec2 p, double v, double a, double heading, double dt) {
    double travelled;
    if (a < 0.0 && v + a * dt < 0.0) {
        const double t_stop = -v / a;
        travelled = v * t_stop / 2.0;  // area of the speed triangle
    } else {
        travelled = (v + (v + a * dt)) / 2.0 * dt;  // trapezoid
    }
    return {p.x + travelled * std::cos(heading), p.y + travelled * std::sin(heading)};
}

inline double closed_form_speed(double v, double a, double dt) { return std::max(0.0, v + a * dt); }

}  // namespace lanemerge::testing
