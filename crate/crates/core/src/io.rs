//! File formats: observation CSVs, trace/export/report files, run manifests.
//!
//! All CSVs use `.` as the decimal separator, LF line endings, UTF-8, and no
//! trailing whitespace. Floats are printed with Rust's shortest
//! round-trippable representation, so identical values produce identical
//! bytes.
//!
//! Observation schemas:
//!
//! * 2D — header `x,z,t,var,value`, `var` in `{tau,v,w,p}`
//! * 3D — header `depth_m,lat_deg,lon_deg,time_iso8601,var,value`, `var` in
//!   `{tau,sal,w,v_theta,v_phi,p}`; rows convert to `(r, theta, phi, t)` via
//!   `r = r_e - depth`, `theta = (90 - lat) pi/180`, `phi = lon pi/180`
//!   wrapped into `[0, 2 pi)`, `t` = Unix seconds.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ObservationRecord, Var};
use crate::geometry::EARTH_RADIUS_M;

pub const OBS_HEADER_2D: &str = "x,z,t,var,value";
pub const OBS_HEADER_3D: &str = "depth_m,lat_deg,lon_deg,time_iso8601,var,value";

// ---------------------------------------------------------------------------
// ISO-8601 time (strict `YYYY-MM-DDTHH:MM:SSZ`)
// ---------------------------------------------------------------------------

fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Parse `YYYY-MM-DDTHH:MM:SSZ` into Unix seconds.
pub fn parse_iso8601(s: &str) -> Result<i64> {
    let bad = |msg: &str| Error::InvalidArgument(format!("time `{s}`: {msg}"));
    let b = s.as_bytes();
    if b.len() != 20 || b[4] != b'-' || b[7] != b'-' || b[10] != b'T' || b[13] != b':' || b[16] != b':' || b[19] != b'Z'
    {
        return Err(bad("expected YYYY-MM-DDTHH:MM:SSZ"));
    }
    let num = |range: std::ops::Range<usize>| -> Result<i64> {
        s[range].parse::<i64>().map_err(|_| bad("malformed number"))
    };
    let (y, m, d) = (num(0..4)?, num(5..7)?, num(8..10)?);
    let (hh, mm, ss) = (num(11..13)?, num(14..16)?, num(17..19)?);
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) || hh > 23 || mm > 59 || ss > 60 {
        return Err(bad("field out of range"));
    }
    Ok(days_from_civil(y, m, d) * 86_400 + hh * 3600 + mm * 60 + ss)
}

/// Format Unix seconds as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_iso8601(secs: i64) -> String {
    let days = secs.div_euclid(86_400);
    let rem = secs.rem_euclid(86_400);
    let (y, m, d) = civil_from_days(days);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

// ---------------------------------------------------------------------------
// Coordinate conversions for the 3D schema
// ---------------------------------------------------------------------------

/// `(depth_m, lat_deg, lon_deg, unix_secs)` to `(r, theta, phi, t)`.
pub fn geo_to_spherical(depth_m: f64, lat_deg: f64, lon_deg: f64, t: f64) -> [f64; 4] {
    let theta = (90.0 - lat_deg).to_radians();
    let mut lon = lon_deg % 360.0;
    if lon < 0.0 {
        lon += 360.0;
    }
    [EARTH_RADIUS_M - depth_m, theta, lon.to_radians(), t]
}

/// Inverse of [`geo_to_spherical`], longitudes in `[0, 360)`.
pub fn spherical_to_geo(p: &[f64; 4]) -> (f64, f64, f64, f64) {
    (
        EARTH_RADIUS_M - p[0],
        90.0 - p[1].to_degrees(),
        p[2].to_degrees(),
        p[3],
    )
}

// ---------------------------------------------------------------------------
// Observation CSV
// ---------------------------------------------------------------------------

pub fn write_obs_csv_2d(obs: &[ObservationRecord]) -> String {
    let mut out = String::from(OBS_HEADER_2D);
    out.push('\n');
    for r in obs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.point[0], r.point[1], r.point[2], r.var, r.value
        ));
    }
    out
}

pub fn write_obs_csv_3d(obs: &[ObservationRecord]) -> String {
    let mut out = String::from(OBS_HEADER_3D);
    out.push('\n');
    for r in obs {
        let (depth, lat, lon, t) = spherical_to_geo(&r.point);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            depth,
            lat,
            lon,
            format_iso8601(t.round() as i64),
            r.var,
            r.value
        ));
    }
    out
}

fn parse_f64(s: &str, path: &str, line: usize, what: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        path: path.into(),
        line,
        message: format!("malformed {what}: `{s}`"),
    })
}

/// Strict 2D observation reader.
pub fn read_obs_csv_2d(text: &str, path: &str) -> Result<Vec<ObservationRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == OBS_HEADER_2D => {}
        other => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: format!(
                    "expected header `{OBS_HEADER_2D}`, got `{}`",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected 5 columns, got {}", cols.len()),
            });
        }
        let var = Var::parse(cols[3]).map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        if !Var::ORDER_2D.contains(&var) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("variable `{var}` is not part of the 2D system"),
            });
        }
        out.push(ObservationRecord {
            point: [
                parse_f64(cols[0], path, line, "x")?,
                parse_f64(cols[1], path, line, "z")?,
                parse_f64(cols[2], path, line, "t")?,
                0.0,
            ],
            var,
            value: parse_f64(cols[4], path, line, "value")?,
            weight: None,
        });
    }
    Ok(out)
}

/// Strict 3D observation reader; coordinates converted to `(r, theta, phi, t)`.
pub fn read_obs_csv_3d(text: &str, path: &str) -> Result<Vec<ObservationRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == OBS_HEADER_3D => {}
        other => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: format!(
                    "expected header `{OBS_HEADER_3D}`, got `{}`",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected 6 columns, got {}", cols.len()),
            });
        }
        let t = parse_iso8601(cols[3]).map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        let var = Var::parse(cols[4]).map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        if var == Var::V {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: "variable `v` is not part of the 3D system".into(),
            });
        }
        out.push(ObservationRecord {
            point: geo_to_spherical(
                parse_f64(cols[0], path, line, "depth_m")?,
                parse_f64(cols[1], path, line, "lat_deg")?,
                parse_f64(cols[2], path, line, "lon_deg")?,
                t as f64,
            ),
            var,
            value: parse_f64(cols[5], path, line, "value")?,
            weight: None,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Provenance of one CLI run: enough to reproduce it exactly.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<(String, u64)>,
    pub threads: usize,
    pub wall_time_secs: f64,
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn iso8601_roundtrip_and_known_values() {
        assert_eq!(parse_iso8601("1970-01-01T00:00:00Z").unwrap(), 0);
        assert_eq!(parse_iso8601("2021-01-16T00:00:00Z").unwrap(), 1610755200);
        assert_eq!(format_iso8601(1610755200), "2021-01-16T00:00:00Z");
        for s in [0i64, 86399, 86400, 1610755200, 4102444800] {
            assert_eq!(parse_iso8601(&format_iso8601(s)).unwrap(), s);
        }
        assert!(parse_iso8601("2021-1-16T00:00:00Z").is_err());
        assert!(parse_iso8601("2021-01-16 00:00:00Z").is_err());
        assert!(parse_iso8601("2021-13-16T00:00:00Z").is_err());
    }

    #[test]
    fn geo_conversion_roundtrip() {
        let p = geo_to_spherical(1500.0, -33.5, 151.2, 1e9);
        let (depth, lat, lon, t) = spherical_to_geo(&p);
        assert_abs_diff_eq!(depth, 1500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lat, -33.5, epsilon = 1e-12);
        assert_abs_diff_eq!(lon, 151.2, epsilon = 1e-12);
        assert_eq!(t, 1e9);
        // negative longitudes wrap into [0, 360)
        let q = geo_to_spherical(0.0, 0.0, -90.0, 0.0);
        assert_abs_diff_eq!(q[2], 270f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn obs_csv_2d_roundtrip_and_strictness() {
        let obs = vec![
            ObservationRecord { point: [0.1, 0.2, 0.3, 0.0], var: Var::Tau, value: 0.5, weight: None },
            ObservationRecord { point: [0.1, 0.2, 0.3, 0.0], var: Var::V, value: -0.25, weight: None },
        ];
        let csv = write_obs_csv_2d(&obs);
        assert!(csv.starts_with("x,z,t,var,value\n"));
        assert!(!csv.contains(' '));
        assert!(csv.ends_with('\n'));
        let back = read_obs_csv_2d(&csv, "mem").unwrap();
        assert_eq!(back, obs);

        let err = read_obs_csv_2d("wrong,header\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = read_obs_csv_2d("x,z,t,var,value\n0.1,0.2,oops,tau,1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = read_obs_csv_2d("x,z,t,var,value\n0.1,0.2,0.3,sal,1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn obs_csv_3d_roundtrip() {
        let point = geo_to_spherical(800.0, 12.25, 237.5, 1610755200.0);
        let obs = vec![
            ObservationRecord { point, var: Var::Tau, value: 11.5, weight: None },
            ObservationRecord { point, var: Var::VTheta, value: 0.03, weight: None },
        ];
        let csv = write_obs_csv_3d(&obs);
        assert!(csv.starts_with(OBS_HEADER_3D));
        assert!(csv.contains("2021-01-16T00:00:00Z"));
        let back = read_obs_csv_3d(&csv, "mem").unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(obs.iter()) {
            for k in 0..4 {
                assert_abs_diff_eq!(a.point[k], b.point[k], epsilon = 1e-6);
            }
            assert_eq!(a.var, b.var);
            assert_eq!(a.value, b.value);
        }
    }
}
