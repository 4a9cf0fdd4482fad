//! Shipped incident fixtures: the analyzed DERMS control-loop source, a
//! benign baseline, and four synthesized incident cases (telemetry plus
//! event sequences).
//!
//! Baselines are constructed bin-by-bin so the documented case values land
//! in known bins: counts are fixed, and sample positions inside each bin are
//! jittered with a seeded generator, so the same seed always produces
//! byte-identical files.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

/// The analyzed application source shipped with the fixtures.
pub const PROGRAM_SOURCE: &str = r#"from gridappsd import GridAPPSD, topics as t


def build_query(mrid, interval):
    query = {"queryMeasurement": "PMU_MAGNITUDE_ANGLE", "queryFilter": mrid, "responseFormat": "JSON"}
    window = {"startTime": interval, "endTime": interval}
    query["queryWindow"] = window
    return query


class DifferenceMessage:
    def __init__(self, mrid, reverse_item, forward_item):
        self.mrid = mrid
        self.reverse_item = reverse_item
        self.forward_item = forward_item


class RequestListener:
    def __init__(self, conn):
        self._conn = conn
        self.last_measure = 0.0
        self.ack_text = ""

    def record(self, measure):
        scaled = measure * 0.001
        self.last_measure = scaled

    def _on_message(self, headers, body):
        summary = "last=" + self.last_measure
        banner = summary + "|ack"
        self.ack_text = banner


username = "system"
password = "manager"
service_mrid = "_EQ_PMU_17"
poll_interval = 900

conn = GridAPPSD(username, password)
listener = RequestListener(conn)

equipment_p = 310.0
equipment_q = 128.0
target_p = equipment_p * 1000.0
target_q = equipment_q * 1000.0
p_component = target_p * 0.6
q_component = target_q * 0.4
target_y = p_component + q_component
p_band = target_p * 0.05
q_band = target_q * 0.05
band_y = p_band + q_band
scale_basis = target_y + band_y

nominalyvalues = [0.0, 0.0, 0.0, 0.0]
i_equip = 1
input_topic = t.INPUT_TOPIC

message = build_query(service_mrid, poll_interval)
response_obj = conn.get_response(t.TIMESERIES, message)
equipment_p_meas = response_obj["p_meas"]
equipment_q_meas = response_obj["q_meas"]
equipment_maxIFault = response_obj["maxIFault"]
equipment_ratedS = response_obj["ratedS"]
equipment_ratedU = response_obj["ratedU"]
equipment_id4dispatch = response_obj["id"]
equipment_name = response_obj["name"]
equipment_type = response_obj["type"]

Yvalue_start = equipment_p_meas * 0.6 + equipment_q_meas * 0.4
rated_limit = equipment_ratedS * equipment_ratedU - equipment_maxIFault
startYvalue = Yvalue_start
delta_measured = startYvalue - target_y
reverse_step = delta_measured + band_y
forward_step = delta_measured - band_y
reverse_scaled = reverse_step / scale_basis
nominalyvalues[i_equip] = forward_step / scale_basis
reverse_value = reverse_scaled * rated_limit
forward_value = nominalyvalues[i_equip] * rated_limit

efficiency_ratio = equipment_p_meas / target_p
loss_estimate = target_p - efficiency_ratio
drift_text = "drift|" + loss_estimate
reactive_ratio = equipment_q_meas / target_q
imbalance = reactive_ratio - q_component
imbalance_note = "imbalance|" + imbalance

difference_obj = DifferenceMessage(equipment_id4dispatch, reverse_value, forward_value)
forward_diff = "fwd|" + difference_obj.mrid + "|" + reverse_value
reverse_diff = "rev|" + difference_obj.mrid + "|" + forward_value
differences = forward_diff + ";" + reverse_diff
diff_text = differences
if equipment_maxIFault > 500.0:
    priority_tag = "URGENT|" + equipment_name + "|" + diff_text
else:
    priority_tag = "ROUTINE|" + equipment_name + "|" + diff_text
dispatch_frame = priority_tag + "|" + equipment_type
frame_text = dispatch_frame
message = "{" + frame_text + "}"
listener.record(equipment_p_meas)
conn.send(input_topic, message)
"#;

const EQUIP_ID: &str = "_EQ_PMU_17";
const EQUIP_NAME: &str = "PV_UNIT_7";
const EQUIP_TYPE: &str = "SolarInverter";

/// Benign setpoint values the dispatch strings are templated from.
const BENIGN_RV: [f64; 3] = [287115.9, 284900.3, 288412.6];
const BENIGN_FV: [f64; 3] = [318220.5, 316444.7, 320110.0];

/// Histogram design for one float baseline variable: range plus
/// (1-based bin, count) overrides; remaining samples spread evenly.
struct FloatSpec {
    variable: &'static str,
    lo: f64,
    hi: f64,
    bins: usize,
    n: usize,
    pinned: &'static [(usize, usize)],
}

const FLOAT_SPECS: &[FloatSpec] = &[
    // 25.345 -> bin 1 (p=.12, low); 30.x -> bin 6 (p=.27, largest);
    // 36.173 -> bin 12 (p=.06, moderate)
    FloatSpec { variable: "angle", lo: 25.0, hi: 45.0, bins: 20, n: 600, pinned: &[(1, 72), (6, 162), (12, 36)] },
    FloatSpec { variable: "equipment_q_meas", lo: 25.0, hi: 45.0, bins: 20, n: 600, pinned: &[(1, 72), (6, 162), (12, 36)] },
    // 1156739.528 -> bin 2 (largest); 1243590.094 -> bin 5 (moderate);
    // 1430307.59 -> bin 12 (moderate); 1972301.79 -> outside every bin
    FloatSpec { variable: "magnitude", lo: 1_100_000.0, hi: 1_700_000.0, bins: 20, n: 600, pinned: &[(2, 162), (5, 36), (12, 30)] },
    FloatSpec { variable: "equipment_p_meas", lo: 1_100_000.0, hi: 1_700_000.0, bins: 20, n: 600, pinned: &[(2, 162), (5, 36), (12, 30)] },
    // benign 356.2 -> bin 12 (largest)
    FloatSpec { variable: "equipment_maxIFault", lo: 200.0, hi: 480.0, bins: 20, n: 200, pinned: &[(12, 60)] },
    // benign 1104.5 -> bin 11 (largest)
    FloatSpec { variable: "equipment_ratedS", lo: 900.0, hi: 1300.0, bins: 20, n: 200, pinned: &[(11, 60)] },
    // benign 12470 -> bin 10 (largest)
    FloatSpec { variable: "equipment_ratedU", lo: 11_000.0, hi: 14_000.0, bins: 20, n: 200, pinned: &[(10, 60)] },
    // benign setpoints -> bin 9 (largest); 397544.2 -> bin 19 (moderate)
    FloatSpec { variable: "forward_value", lo: 250_000.0, hi: 410_000.0, bins: 20, n: 200, pinned: &[(9, 60), (19, 10)] },
    // benign setpoints -> bin 5 (largest); 395872.1 -> bin 19 (moderate)
    FloatSpec { variable: "reverse_value", lo: 250_000.0, hi: 410_000.0, bins: 20, n: 200, pinned: &[(5, 60), (19, 10)] },
];

fn fwd_diff(rv: f64) -> String {
    format!("fwd|{}|{}", EQUIP_ID, rv)
}

fn rev_diff(fv: f64) -> String {
    format!("rev|{}|{}", EQUIP_ID, fv)
}

fn differences(rv: f64, fv: f64) -> String {
    format!("{};{}", fwd_diff(rv), rev_diff(fv))
}

fn priority_tag(urgent: bool, rv: f64, fv: f64) -> String {
    format!(
        "{}|{}|{}",
        if urgent { "URGENT" } else { "ROUTINE" },
        EQUIP_NAME,
        differences(rv, fv)
    )
}

fn dispatch_frame(urgent: bool, rv: f64, fv: f64) -> String {
    format!("{}|{}", priority_tag(urgent, rv, fv), EQUIP_TYPE)
}

fn message_text(urgent: bool, rv: f64, fv: f64) -> String {
    format!("{{{}}}", dispatch_frame(urgent, rv, fv))
}

/// Values observed in one incident case.
pub struct CaseValues {
    pub case: u8,
    /// (angle, magnitude) on the field side.
    pub field: (f64, f64),
    /// (angle, magnitude) on the network and application-log side.
    pub cyber: (f64, f64),
    pub p_meas: f64,
    pub q_meas: f64,
    pub max_i_fault: f64,
    pub rated_s: f64,
    pub rated_u: f64,
    pub reverse_value: f64,
    pub forward_value: f64,
    pub urgent: bool,
    /// Epoch base for the case's timestamps.
    pub base_ms: i64,
}

pub fn case_values(case: u8) -> CaseValues {
    match case {
        1 => CaseValues {
            case: 1,
            field: (25.345, 1972301.79),
            cyber: (25.345, 1972301.79),
            p_meas: 1972301.79,
            q_meas: 25.345,
            max_i_fault: 812.44,
            rated_s: 77.31,
            rated_u: 99812.5,
            reverse_value: 604512.3,
            forward_value: 612345.7,
            urgent: true,
            base_ms: 1_900_000_000_000,
        },
        2 => CaseValues {
            case: 2,
            field: (30.7597, 1156739.528),
            cyber: (30.7597, 1430307.59),
            p_meas: 1430307.59,
            q_meas: 30.7597,
            max_i_fault: 356.2,
            rated_s: 1104.5,
            rated_u: 12470.0,
            reverse_value: 395872.1,
            forward_value: 397544.2,
            urgent: false,
            base_ms: 1_900_086_400_000,
        },
        3 => CaseValues {
            case: 3,
            field: (30.411, 1156739.528),
            cyber: (30.411, 1156739.528),
            p_meas: 1156739.528,
            q_meas: 30.411,
            max_i_fault: 356.2,
            rated_s: 1104.5,
            rated_u: 12470.0,
            reverse_value: 731404.88,
            forward_value: BENIGN_FV[0],
            urgent: false,
            base_ms: 1_900_172_800_000,
        },
        4 => CaseValues {
            case: 4,
            field: (36.173, 1243590.094),
            cyber: (36.173, 1243590.094),
            p_meas: 1243590.094,
            q_meas: 36.173,
            max_i_fault: 356.2,
            rated_s: 1104.5,
            rated_u: 12470.0,
            reverse_value: BENIGN_RV[0],
            forward_value: 734220.19,
            urgent: false,
            base_ms: 1_900_259_200_000,
        },
        other => panic!("unknown case {other}; cases are 1..=4"),
    }
}

/// The incident event CSV for one case.
pub fn events_csv(case: u8) -> String {
    let v = case_values(case);
    match case {
        1 | 2 | 4 => {
            let incident = match case {
                1 => "equipment fault",
                2 => "injected measurement",
                _ => "manipulated calculation",
            };
            format!(
                "1,E1,{},'angle' sensing event\n\
                 2,E1,{},'magnitude' sensing event\n\
                 3,E3,,values in one or more fields of response_obj are inconsistent\n\
                 4,E5,{},equipment_p_meas reflects the {}\n\
                 5,E5,{},equipment_q_meas reflects the {}\n\
                 6,E10,{},forward_value inconsistent with the dispatch plan\n\
                 7,E13,,corresponding difference messages are altered\n\
                 8,E15,,message containing unexpected values is sent to the physical side\n",
                v.cyber.0,
                v.cyber.1,
                v.p_meas,
                incident,
                v.q_meas,
                incident,
                v.forward_value
            )
        }
        3 => format!(
            "1,E1,,reactive power anomaly reported by the ADS\n\
             2,E2,,response_obj is consistent\n\
             3,E6,{},equipment_p_meas is consistent\n\
             4,E7,{},equipment_q_meas is consistent\n\
             5,E11,{},reverse_value inconsistent with its history\n\
             6,E13,,corresponding difference messages are altered\n\
             7,E15,,message containing unexpected values is sent to the physical side\n",
            v.p_meas, v.q_meas, v.reverse_value
        ),
        other => panic!("unknown case {other}"),
    }
}

/// Field (d) channel CSV for one case.
pub fn field_csv(case: u8) -> String {
    let v = case_values(case);
    format!(
        "timestamp_ms,variable,value\n{},angle,{}\n{},magnitude,{}\n",
        v.base_ms, v.field.0, v.base_ms, v.field.1
    )
}

/// Network (n) channel CSV for one case.
pub fn network_csv(case: u8) -> String {
    let v = case_values(case);
    let t = v.base_ms + 140;
    format!(
        "timestamp_ms,variable,value\n{},angle,{}\n{},magnitude,{}\n",
        t, v.cyber.0, t, v.cyber.1
    )
}

fn iso(ms: i64) -> String {
    chrono::DateTime::from_timestamp_millis(ms)
        .expect("valid timestamp")
        .to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Application log for one case: the raw response fields, every logged
/// program variable, and a few free-text lines.
pub fn app_log(case: u8) -> String {
    let v = case_values(case);
    let mut t = v.base_ms + 290;
    let mut s = String::new();
    let line = |t: &mut i64, var: &str, val: String, s: &mut String| {
        s.push_str(&format!("{} {}={}\n", iso(*t), var, val));
        *t += 7;
    };
    s.push_str(&format!(
        "{} poll cycle started for {}\n",
        iso(v.base_ms + 285),
        EQUIP_ID
    ));
    line(&mut t, "angle", format!("{}", v.cyber.0), &mut s);
    line(&mut t, "magnitude", format!("{}", v.cyber.1), &mut s);
    line(&mut t, "equipment_p_meas", format!("{}", v.p_meas), &mut s);
    line(&mut t, "equipment_q_meas", format!("{}", v.q_meas), &mut s);
    line(&mut t, "equipment_maxIFault", format!("{}", v.max_i_fault), &mut s);
    line(&mut t, "equipment_ratedS", format!("{}", v.rated_s), &mut s);
    line(&mut t, "equipment_ratedU", format!("{}", v.rated_u), &mut s);
    line(&mut t, "equipment_id4dispatch", EQUIP_ID.into(), &mut s);
    line(&mut t, "equipment_name", EQUIP_NAME.into(), &mut s);
    line(&mut t, "equipment_type", EQUIP_TYPE.into(), &mut s);
    line(&mut t, "equipment_p", "310".into(), &mut s);
    line(&mut t, "equipment_q", "128".into(), &mut s);
    s.push_str(&format!("{} computing dispatch differences\n", iso(t)));
    t += 7;
    line(&mut t, "reverse_value", format!("{}", v.reverse_value), &mut s);
    line(&mut t, "forward_value", format!("{}", v.forward_value), &mut s);
    line(&mut t, "forward_diff", fwd_diff(v.reverse_value), &mut s);
    line(&mut t, "reverse_diff", rev_diff(v.forward_value), &mut s);
    line(&mut t, "differences", differences(v.reverse_value, v.forward_value), &mut s);
    line(&mut t, "priority_tag", priority_tag(v.urgent, v.reverse_value, v.forward_value), &mut s);
    line(&mut t, "dispatch_frame", dispatch_frame(v.urgent, v.reverse_value, v.forward_value), &mut s);
    line(&mut t, "message", message_text(v.urgent, v.reverse_value, v.forward_value), &mut s);
    s.push_str(&format!("{} dispatch sent on the input topic\n", iso(t)));
    s
}

/// The shared benign baseline CSV.
pub fn baseline_csv(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("variable,value\n");
    for spec in FLOAT_SPECS {
        let width = (spec.hi - spec.lo) / spec.bins as f64;
        let mut counts = vec![0usize; spec.bins];
        let pinned_total: usize = spec.pinned.iter().map(|(_, c)| c).sum();
        for (bin, count) in spec.pinned {
            counts[bin - 1] = *count;
        }
        let free_bins: Vec<usize> = (0..spec.bins)
            .filter(|i| !spec.pinned.iter().any(|(b, _)| b - 1 == *i))
            .collect();
        let remaining = spec.n - pinned_total;
        let per = remaining / free_bins.len();
        let mut extra = remaining % free_bins.len();
        for &i in &free_bins {
            counts[i] = per + usize::from(extra > 0);
            extra = extra.saturating_sub(1);
        }
        for (i, &count) in counts.iter().enumerate() {
            let lo = spec.lo + width * i as f64;
            for k in 0..count {
                // pin the global range so the fitted edges are the design
                // edges: first sample of the first bin sits on the minimum,
                // last sample of the last bin on the maximum
                let value = if i == 0 && k == 0 {
                    spec.lo
                } else if i == spec.bins - 1 && k + 1 == count {
                    spec.hi
                } else {
                    let u: f64 = rng.gen_range(0.02..0.98);
                    lo + width * (k as f64 + u) / count as f64
                };
                s.push_str(&format!("{},{}\n", spec.variable, value));
            }
        }
    }
    // constant planning inputs
    for _ in 0..40 {
        s.push_str("equipment_p,310\n");
        s.push_str("equipment_q,128\n");
    }
    // benign strings
    for v in [EQUIP_ID] {
        for _ in 0..3 {
            s.push_str(&format!("equipment_id4dispatch,{}\n", v));
        }
    }
    for _ in 0..3 {
        s.push_str(&format!("equipment_name,{}\n", EQUIP_NAME));
        s.push_str(&format!("equipment_type,{}\n", EQUIP_TYPE));
    }
    for (rv, fv) in BENIGN_RV.iter().zip(BENIGN_FV.iter()) {
        s.push_str(&format!("forward_diff,{}\n", fwd_diff(*rv)));
        s.push_str(&format!("reverse_diff,{}\n", rev_diff(*fv)));
        s.push_str(&format!("differences,{}\n", differences(*rv, *fv)));
        s.push_str(&format!("priority_tag,{}\n", priority_tag(false, *rv, *fv)));
        s.push_str(&format!("dispatch_frame,{}\n", dispatch_frame(false, *rv, *fv)));
        s.push_str(&format!("message,{}\n", message_text(false, *rv, *fv)));
    }
    s
}

/// The shared run configuration, with paths relative to the fixture root.
pub fn fixture_config() -> RunConfig {
    RunConfig {
        source: "program.der".into(),
        baseline: "baseline.csv".into(),
        ..RunConfig::default()
    }
}

fn write(path: &Path, content: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())
}

/// Write program, baseline, and config into `dir`.
pub fn write_shared(dir: &Path, seed: u64) -> std::io::Result<()> {
    write(&dir.join("program.der"), PROGRAM_SOURCE)?;
    write(&dir.join("baseline.csv"), &baseline_csv(seed))?;
    let cfg = fixture_config();
    write(
        &dir.join("config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&cfg).expect("config")),
    )
}

/// Write one case directory (`field.csv`, `network.csv`, `app.log`,
/// `events.csv`).
pub fn write_case(case_dir: &Path, case: u8) -> std::io::Result<()> {
    write(&case_dir.join("field.csv"), &field_csv(case))?;
    write(&case_dir.join("network.csv"), &network_csv(case))?;
    write(&case_dir.join("app.log"), &app_log(case))?;
    write(&case_dir.join("events.csv"), &events_csv(case))
}

/// Write the full fixture tree: shared files plus `case1`..`case4`.
pub fn write_all(dir: &Path, seed: u64) -> std::io::Result<()> {
    write_shared(dir, seed)?;
    for case in 1..=4u8 {
        write_case(&dir.join(format!("case{case}")), case)?;
    }
    Ok(())
}
