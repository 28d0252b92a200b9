use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::likelihood::MleFlag;

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::input(format!("csv: {other:?}")),
    }
}

fn flag_name(flag: MleFlag) -> &'static str {
    match flag {
        MleFlag::Interior => "interior",
        MleFlag::BoundaryZero => "boundary_zero",
        MleFlag::UnboundedLikelihood => "unbounded_likelihood",
    }
}

/// One row per pixel: `row,col,count,flux,flag`.
pub fn write_flux_csv<W: Write>(writer: W, counts: &[usize], flux: &Image, flags: &[MleFlag]) -> Result<()> {
    if counts.len() != flux.len() || flags.len() != flux.len() {
        return Err(Error::input("counts, flux and flags must cover the same pixels"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "col", "count", "flux", "flag"])
        .map_err(csv_error)?;
    for (i, ((&count, &value), &flag)) in counts.iter().zip(flux.data()).zip(flags).enumerate() {
        let (row, col) = (i / flux.width(), i % flux.width());
        w.write_record([
            row.to_string(),
            col.to_string(),
            count.to_string(),
            format!("{value:e}"),
            flag_name(flag).to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// `metric,value` rows.
pub fn write_metrics_csv<W: Write>(writer: W, metrics: &[(&str, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "value"]).map_err(csv_error)?;
    for (name, value) in metrics {
        w.write_record([name.to_string(), format!("{value}")])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
