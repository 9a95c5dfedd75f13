//! Number formatting and the CSV layouts written by the commands.

use std::io::Write;

use cnnslicer_core::flow::{ChannelEntropySeries, CapacityMatrix, EntropyValue};
use cnnslicer_core::perf::{ConditionalEntropySeries, ConfusionMatrix};
use cnnslicer_core::store::LossRow;
use cnnslicer_core::{Error, Result};

/// Six significant digits, `%g` style: trailing zeros dropped, scientific
/// notation outside `1e-4 <= |x| < 1e6`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Exponent after rounding to six digits, so 999999.5 lands in 1e6.
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        trim_zeros(format!("{x:.*}", (5 - exp) as usize))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<output>", io),
        other => Error::InvalidArgument(format!("csv output: {other:?}")),
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::io("<output>", e))
}

/// `layer,epoch,channel,bits`; `channel` is empty for whole-layer values.
pub fn write_entropy_values<W: Write>(out: W, values: &[EntropyValue]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["layer", "epoch", "channel", "bits"]).map_err(csv_error)?;
    for v in values {
        let channel = v.channel.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([v.layer.to_string(), v.epoch.to_string(), channel, sig6(v.bits)])
            .map_err(csv_error)?;
    }
    finish(w)
}

/// Rows are channels of `layer_i`, columns channels of `layer_j`, both in
/// original index order.
pub fn write_capacity_matrix<W: Write>(out: W, m: &CapacityMatrix) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec!["channel".to_string()];
    header.extend((0..m.cols()).map(|b| b.to_string()));
    w.write_record(&header).map_err(csv_error)?;
    for (a, row) in m.values.iter().enumerate() {
        let mut record = vec![a.to_string()];
        record.extend(row.iter().map(|&v| sig6(v)));
        w.write_record(&record).map_err(csv_error)?;
    }
    finish(w)
}

/// `rank,channel`: the channel shown at each position.
pub fn write_order<W: Write>(out: W, order: &[usize]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["rank", "channel"]).map_err(csv_error)?;
    for (rank, c) in order.iter().enumerate() {
        w.write_record([rank.to_string(), c.to_string()]).map_err(csv_error)?;
    }
    finish(w)
}

/// Rows are actual classes, columns predicted classes.
pub fn write_confusion<W: Write>(out: W, m: &ConfusionMatrix) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((0..m.num_classes()).map(|c| c.to_string()));
    w.write_record(&header).map_err(csv_error)?;
    for (a, row) in m.counts.iter().enumerate() {
        let mut record = vec![a.to_string()];
        record.extend(row.iter().map(u64::to_string));
        w.write_record(&record).map_err(csv_error)?;
    }
    finish(w)
}

/// `class,epoch,bits`; `bits` is empty where the entropy is undefined.
pub fn write_conditional<W: Write>(out: W, s: &ConditionalEntropySeries) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["class", "epoch", "bits"]).map_err(csv_error)?;
    for (class, row) in s.values.iter().enumerate() {
        for (epoch, v) in s.epochs.iter().zip(row) {
            w.write_record([class.to_string(), epoch.to_string(), v.map(sig6).unwrap_or_default()])
                .map_err(csv_error)?;
        }
    }
    finish(w)
}

pub fn write_loss<W: Write>(out: W, rows: &[LossRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["epoch", "train_loss", "test_accuracy"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([r.epoch.to_string(), sig6(r.train_loss), sig6(r.test_accuracy)])
            .map_err(csv_error)?;
    }
    finish(w)
}

/// `channel,class,epoch,bits`, with class `all` after the numbered classes.
pub fn write_series<W: Write>(out: W, s: &ChannelEntropySeries) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["channel", "class", "epoch", "bits"]).map_err(csv_error)?;
    for (channel, per_class) in s.values.iter().enumerate() {
        for (class, per_epoch) in s.classes.iter().zip(per_class) {
            for (epoch, &v) in s.epochs.iter().zip(per_epoch) {
                w.write_record([channel.to_string(), class.clone(), epoch.to_string(), sig6(v)])
                    .map_err(csv_error)?;
            }
        }
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        let cases = [
            (19.898151, "19.8982"),
            (19.89815, "19.8982"),
            (1.0, "1"),
            (0.5, "0.5"),
            (-2.25, "-2.25"),
            (123456.7, "123457"),
            (999999.6, "1e+06"),
            (1234567.0, "1.23457e+06"),
            (0.0001234567, "0.000123457"),
            (0.00001234567, "1.23457e-05"),
            (3.0f64.log2(), "1.58496"),
            (0.0, "0"),
            (-0.0, "0"),
        ];
        for (x, s) in cases {
            assert_eq!(sig6(x), s, "{x}");
        }
    }

    #[test]
    fn matches_c_printf_g() {
        // Reference strings produced by printf("%g").
        let cases = [(0.1 + 0.2, "0.3"), (100.0, "100"), (1e-4, "0.0001"), (1e21, "1e+21"), (2.5e-7, "2.5e-07")];
        for (x, s) in cases {
            assert_eq!(sig6(x), s, "{x}");
        }
    }
}
