//! Line-oriented `key = value` configuration files.
//!
//! Keys carry dotted section prefixes (`sim.`, `energy.`, `led.`, `optics.`,
//! `raster.`). A value may repeat the key's unit after the number
//! (`led.distance_mm = 0.5 mm`); any other unit is rejected. Unknown keys are
//! errors. When `energy.e_max_j` is absent it is derived from the LED and
//! optics parameters.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{round_robin_layers, Layer, ProtocolChoice, RasterSource, SimConfig};

/// `(key, unit)` for every recognised key. Empty unit means dimensionless.
pub const KEYS: &[(&str, &str)] = &[
    ("sim.device_count", ""),
    ("sim.device_layers", ""),
    ("sim.frequency_count", ""),
    ("sim.window_width", "slots"),
    ("sim.slot_duration_ms", "ms"),
    ("sim.duration_s", "s"),
    ("sim.seed", ""),
    ("sim.protocol", ""),
    ("sim.emission_slots", "slots"),
    ("sim.min_emission_gap", "slots"),
    ("sim.start_empty", ""),
    ("sim.cf_broadcast_charging", ""),
    ("energy.i_s_mw_cm2", "mW/cm2"),
    ("energy.alpha_db_cm_mhz", "dB/(cm*MHz)"),
    ("energy.f_us_hz", "Hz"),
    ("energy.depth_cm", "cm"),
    ("energy.a_eh_cm2", "cm2"),
    ("energy.eta", ""),
    ("energy.v_g", "V"),
    ("energy.c_cap_f", "F"),
    ("energy.e_max_j", "J"),
    ("led.area_mm2", "mm2"),
    ("led.pulse_ms", "ms"),
    ("led.efficiency", ""),
    ("led.distance_mm", "mm"),
    ("optics.mu_a_per_mm", "1/mm"),
    ("optics.mu_s_prime_per_mm", "1/mm"),
    ("optics.g_const", ""),
    ("optics.target_mw_mm2", "mW/mm2"),
    ("optics.wavelength_nm", "nm"),
    ("raster.kind", ""),
    ("raster.rate_hz", "Hz"),
    ("raster.rate_after_hz", "Hz"),
    ("raster.switch_time_s", "s"),
    ("raster.amplitude", ""),
    ("raster.period_ms", "ms"),
    ("raster.path", ""),
];

fn unit_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, u)| *u)
}

/// Split `key = value` lines into pairs, skipping comments and blanks.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse a `key=value` override from the command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Parse {
        line: 0,
        message: format!("override '{s}' is not key=value"),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Default)]
struct RasterKeys {
    kind: Option<String>,
    rate: Option<f64>,
    rate_after: Option<f64>,
    switch: Option<f64>,
    amplitude: Option<f64>,
    period: Option<f64>,
    path: Option<String>,
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        message: format!("{key}: {}", msg.into()),
    }
}

fn strip_unit<'a>(key: &str, value: &'a str) -> Result<&'a str> {
    let unit = unit_of(key).ok_or_else(|| bad(key, "unknown key"))?;
    let mut parts = value.split_whitespace();
    let num = parts.next().unwrap_or("");
    match parts.next() {
        None => Ok(num),
        Some(u) if !unit.is_empty() && u == unit && parts.next().is_none() => Ok(num),
        Some(u) => Err(bad(
            key,
            format!(
                "unit '{u}' does not match the key's unit '{}' (mixed units are rejected)",
                if unit.is_empty() { "dimensionless" } else { unit }
            ),
        )),
    }
}

fn num(key: &str, value: &str) -> Result<f64> {
    let v = strip_unit(key, value)?;
    v.parse::<f64>().map_err(|_| bad(key, format!("'{v}' is not a number")))
}

fn int(key: &str, value: &str) -> Result<u64> {
    let v = strip_unit(key, value)?;
    v.parse::<u64>()
        .map_err(|_| bad(key, format!("'{v}' is not a non-negative integer")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match strip_unit(key, value)? {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        v => Err(bad(key, format!("'{v}' is not a boolean"))),
    }
}

/// Build a configuration from defaults plus `pairs`, later pairs winning.
pub fn config_from_pairs(pairs: &[(String, String)]) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    let mut layers: Option<Vec<Layer>> = None;
    let mut raster = RasterKeys::default();
    let mut e_max: Option<f64> = None;

    for (key, value) in pairs {
        let (key, value) = (key.as_str(), value.as_str());
        match key {
            "sim.device_count" => cfg.device_count = int(key, value)? as usize,
            "sim.device_layers" => {
                let v = strip_unit(key, value)?;
                layers = if v == "round_robin" {
                    None
                } else {
                    Some(v.split(',').map(|s| s.parse::<Layer>()).collect::<Result<Vec<_>>>()?)
                };
            }
            "sim.frequency_count" => cfg.frequency_count = int(key, value)? as usize,
            "sim.window_width" => cfg.window_width = int(key, value)? as usize,
            "sim.slot_duration_ms" => cfg.slot_duration_ms = num(key, value)?,
            "sim.duration_s" => cfg.duration_s = num(key, value)?,
            "sim.seed" => cfg.seed = int(key, value)?,
            "sim.protocol" => cfg.protocol = strip_unit(key, value)?.parse::<ProtocolChoice>()?,
            "sim.emission_slots" => cfg.emission_slots = int(key, value)? as usize,
            "sim.min_emission_gap" => cfg.min_emission_gap = int(key, value)? as usize,
            "sim.start_empty" => cfg.start_empty = boolean(key, value)?,
            "sim.cf_broadcast_charging" => cfg.cf_broadcast_charging = boolean(key, value)?,
            "energy.i_s_mw_cm2" => cfg.energy.i_s = num(key, value)?,
            "energy.alpha_db_cm_mhz" => cfg.energy.alpha = num(key, value)?,
            "energy.f_us_hz" => cfg.energy.f_us = num(key, value)?,
            "energy.depth_cm" => cfg.energy.depth = num(key, value)?,
            "energy.a_eh_cm2" => cfg.energy.a_eh = num(key, value)?,
            "energy.eta" => cfg.energy.eta = num(key, value)?,
            "energy.v_g" => cfg.energy.v_g = num(key, value)?,
            "energy.c_cap_f" => cfg.energy.c_cap = num(key, value)?,
            "energy.e_max_j" => e_max = Some(num(key, value)?),
            "led.area_mm2" => cfg.led.area_mm2 = num(key, value)?,
            "led.pulse_ms" => cfg.led.pulse_ms = num(key, value)?,
            "led.efficiency" => cfg.led.efficiency = num(key, value)?,
            "led.distance_mm" => cfg.led.distance_mm = num(key, value)?,
            "optics.mu_a_per_mm" => cfg.optics.mu_a = num(key, value)?,
            "optics.mu_s_prime_per_mm" => cfg.optics.mu_s_prime = num(key, value)?,
            "optics.g_const" => cfg.optics.g_const = num(key, value)?,
            "optics.target_mw_mm2" => cfg.optics.target_intensity = num(key, value)?,
            "optics.wavelength_nm" => cfg.optics.wavelength_nm = num(key, value)?,
            "raster.kind" => raster.kind = Some(strip_unit(key, value)?.to_string()),
            "raster.rate_hz" => raster.rate = Some(num(key, value)?),
            "raster.rate_after_hz" => raster.rate_after = Some(num(key, value)?),
            "raster.switch_time_s" => raster.switch = Some(num(key, value)?),
            "raster.amplitude" => raster.amplitude = Some(num(key, value)?),
            "raster.period_ms" => raster.period = Some(num(key, value)?),
            "raster.path" => raster.path = Some(value.to_string()),
            _ => return Err(bad(key, "unknown key")),
        }
    }

    cfg.device_layers = layers.unwrap_or_else(|| round_robin_layers(cfg.device_count));
    cfg.raster = build_raster(raster, cfg.duration_s)?;
    cfg.energy.e_max = match e_max {
        Some(e) => e,
        None => cfg.led.pulse_energy(&cfg.optics).unwrap_or(f64::NAN),
    };
    Ok(cfg)
}

fn build_raster(r: RasterKeys, duration_s: f64) -> Result<RasterSource> {
    let rate = r.rate.unwrap_or(100.0);
    Ok(match r.kind.as_deref().unwrap_or("poisson") {
        "poisson" => RasterSource::Poisson { rate_hz: rate },
        "direction_switch" => RasterSource::DirectionSwitch {
            rate_before_hz: rate,
            rate_after_hz: r.rate_after.unwrap_or(rate),
            switch_time_s: r.switch.unwrap_or(duration_s / 2.0),
        },
        "keat" => RasterSource::Keat {
            amplitude: r.amplitude.unwrap_or(1.0),
            period_ms: r.period.unwrap_or(50.0),
        },
        "file" => RasterSource::File {
            path: r
                .path
                .ok_or_else(|| bad("raster.path", "required when raster.kind = file"))?,
        },
        other => return Err(bad("raster.kind", format!("unknown raster kind '{other}'"))),
    })
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    config_from_pairs(&parse_pairs(text)?)
}

/// Fully resolved pairs, in schema order.
pub fn config_to_pairs(cfg: &SimConfig) -> Vec<(String, String)> {
    let layers: Vec<&str> = cfg.device_layers.iter().map(|l| l.as_str()).collect();
    let mut out: Vec<(&str, String)> = vec![
        ("sim.device_count", cfg.device_count.to_string()),
        ("sim.device_layers", layers.join(",")),
        ("sim.frequency_count", cfg.frequency_count.to_string()),
        ("sim.window_width", cfg.window_width.to_string()),
        ("sim.slot_duration_ms", cfg.slot_duration_ms.to_string()),
        ("sim.duration_s", cfg.duration_s.to_string()),
        ("sim.seed", cfg.seed.to_string()),
        ("sim.protocol", cfg.protocol.to_string()),
        ("sim.emission_slots", cfg.emission_slots.to_string()),
        ("sim.min_emission_gap", cfg.min_emission_gap.to_string()),
        ("sim.start_empty", cfg.start_empty.to_string()),
        ("sim.cf_broadcast_charging", cfg.cf_broadcast_charging.to_string()),
        ("energy.i_s_mw_cm2", cfg.energy.i_s.to_string()),
        ("energy.alpha_db_cm_mhz", cfg.energy.alpha.to_string()),
        ("energy.f_us_hz", cfg.energy.f_us.to_string()),
        ("energy.depth_cm", cfg.energy.depth.to_string()),
        ("energy.a_eh_cm2", cfg.energy.a_eh.to_string()),
        ("energy.eta", cfg.energy.eta.to_string()),
        ("energy.v_g", cfg.energy.v_g.to_string()),
        ("energy.c_cap_f", cfg.energy.c_cap.to_string()),
        ("energy.e_max_j", cfg.energy.e_max.to_string()),
        ("led.area_mm2", cfg.led.area_mm2.to_string()),
        ("led.pulse_ms", cfg.led.pulse_ms.to_string()),
        ("led.efficiency", cfg.led.efficiency.to_string()),
        ("led.distance_mm", cfg.led.distance_mm.to_string()),
        ("optics.mu_a_per_mm", cfg.optics.mu_a.to_string()),
        ("optics.mu_s_prime_per_mm", cfg.optics.mu_s_prime.to_string()),
        ("optics.g_const", cfg.optics.g_const.to_string()),
        ("optics.target_mw_mm2", cfg.optics.target_intensity.to_string()),
        ("optics.wavelength_nm", cfg.optics.wavelength_nm.to_string()),
        ("raster.kind", cfg.raster.kind().to_string()),
    ];
    match &cfg.raster {
        RasterSource::Poisson { rate_hz } => out.push(("raster.rate_hz", rate_hz.to_string())),
        RasterSource::DirectionSwitch {
            rate_before_hz,
            rate_after_hz,
            switch_time_s,
        } => {
            out.push(("raster.rate_hz", rate_before_hz.to_string()));
            out.push(("raster.rate_after_hz", rate_after_hz.to_string()));
            out.push(("raster.switch_time_s", switch_time_s.to_string()));
        }
        RasterSource::Keat { amplitude, period_ms } => {
            out.push(("raster.amplitude", amplitude.to_string()));
            out.push(("raster.period_ms", period_ms.to_string()));
        }
        RasterSource::File { path } => out.push(("raster.path", path.clone())),
    }
    out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn config_to_text(cfg: &SimConfig) -> String {
    config_to_pairs(cfg)
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

/// Sidecar form: a flat JSON object of key → value strings.
pub fn config_to_json(cfg: &SimConfig) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = config_to_pairs(cfg)
        .into_iter()
        .map(|(k, v)| (k, serde_json::Value::String(v)))
        .collect();
    serde_json::Value::Object(map)
}

pub fn config_from_json(v: &serde_json::Value) -> Result<SimConfig> {
    config_from_pairs(&json_pairs(v)?)
}

fn json_pairs(v: &serde_json::Value) -> Result<Vec<(String, String)>> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Format("config JSON must be an object".into()))?;
    // keep a deterministic application order
    let ordered: BTreeMap<String, String> = obj
        .iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect();
    Ok(ordered.into_iter().collect())
}

/// Key/value pairs of either the text format or a JSON sidecar, so that
/// overrides can be appended before resolving.
pub fn load_pairs_str(text: &str) -> Result<Vec<(String, String)>> {
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(text)?;
        json_pairs(v.get("config").unwrap_or(&v))
    } else {
        parse_pairs(text)
    }
}

/// Parse either the text format or a JSON sidecar.
pub fn load_config_str(text: &str) -> Result<SimConfig> {
    config_from_pairs(&load_pairs_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = SimConfig::default();
        assert_eq!(parse_config(&config_to_text(&cfg)).unwrap(), cfg);
        assert_eq!(parse_config("").unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let e = parse_config("sim.bogus = 1").unwrap_err();
        assert!(e.to_string().contains("unknown key"));
    }

    #[test]
    fn units_checked() {
        let cfg = parse_config("led.distance_mm = 0.7 mm").unwrap();
        assert_eq!(cfg.led.distance_mm, 0.7);
        assert!(parse_config("led.distance_mm = 0.07 cm").is_err());
        assert!(parse_config("sim.device_count = 3 mm").is_err());
    }

    #[test]
    fn comments_and_layers() {
        let cfg = parse_config("# demo\nsim.device_count = 3 # three\nsim.device_layers = L5,L6,L2/3\n").unwrap();
        assert_eq!(cfg.device_layers, vec![Layer::L5, Layer::L6, Layer::L23]);
        let rr = parse_config("sim.device_count = 6").unwrap();
        assert_eq!(rr.device_layers[4], Layer::L23);
    }

    #[test]
    fn e_max_derived_unless_given() {
        let a = parse_config("led.efficiency = 0.6").unwrap();
        let b = SimConfig::default();
        assert!((a.energy.e_max * 2.0 - b.energy.e_max).abs() < 1e-20);
        let c = parse_config("energy.e_max_j = 1e-9").unwrap();
        assert_eq!(c.energy.e_max, 1e-9);
    }

    #[test]
    fn json_sidecar() {
        let cfg = SimConfig {
            protocol: ProtocolChoice::PsdwMarkov,
            frequency_count: 10,
            raster: RasterSource::DirectionSwitch {
                rate_before_hz: 100.0,
                rate_after_hz: 130.0,
                switch_time_s: 4.0,
            },
            ..SimConfig::default()
        };
        let j = config_to_json(&cfg);
        assert_eq!(config_from_json(&j).unwrap(), cfg);
        let wrapped = serde_json::json!({ "config": j }).to_string();
        assert_eq!(load_config_str(&wrapped).unwrap(), cfg);
    }

    fn arb_config() -> impl Strategy<Value = SimConfig> {
        (
            1usize..40,
            1usize..30,
            1usize..8,
            0.1f64..5.0,
            0.01f64..20.0,
            any::<u64>(),
            0usize..3,
            100.0f64..720.0,
            1e3f64..3e6,
            0.0f64..300.0,
            any::<bool>(),
        )
            .prop_map(|(dev, freq, w, slot, dur, seed, proto, i_s, f_us, rate, empty)| {
                let mut cfg = SimConfig::default();
                cfg.set_device_count(dev);
                cfg.frequency_count = freq;
                cfg.window_width = w;
                cfg.slot_duration_ms = slot;
                cfg.duration_s = dur;
                cfg.seed = seed;
                cfg.protocol = ProtocolChoice::ALL[proto];
                cfg.energy.i_s = i_s;
                cfg.energy.f_us = f_us;
                cfg.raster = RasterSource::Poisson { rate_hz: rate };
                cfg.start_empty = empty;
                cfg
            })
    }

    proptest! {
        #[test]
        fn text_round_trip(cfg in arb_config()) {
            let back = parse_config(&config_to_text(&cfg)).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
