use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tma_core::TmaError;

/// Failure of a CLI command, tagged with its exit code.
#[derive(Debug)]
pub enum CliError {
    Core(TmaError),
    Io { path: PathBuf, source: io::Error },
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                tma_core::ErrorKind::Validation => 2,
                tma_core::ErrorKind::Data => 3,
                tma_core::ErrorKind::Numerical => 4,
            },
            CliError::Io { .. } | CliError::Parse(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Parse(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<TmaError> for CliError {
    fn from(e: TmaError) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads the `y` column (or the first column) of a headed CSV file.
pub fn read_series(path: &Path) -> CliResult<Vec<f64>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Parse(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(CliError::Parse(format!("{}: empty header", path.display())));
    }
    let col = headers.iter().position(|h| h == "y").unwrap_or(0);
    if headers.len() > 1 {
        eprintln!(
            "warning: {} has {} columns; using `{}` and ignoring the rest",
            path.display(),
            headers.len(),
            &headers[col]
        );
    }
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(col).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| {
            CliError::Parse(format!("{}: line {line}: cannot parse `{field}` as a number", path.display()))
        })?;
        if !v.is_finite() {
            return Err(CliError::Parse(format!("{}: line {line}: value is not finite", path.display())));
        }
        values.push(v);
    }
    Ok(values)
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn out_path(path: Option<&Path>) -> PathBuf {
    path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf)
}

/// One `y` column, shortest round-trip decimal representation.
pub fn write_series(path: Option<&Path>, values: &[f64]) -> CliResult<()> {
    let mut w = open_output(path)?;
    let target = out_path(path);
    let mut body = String::with_capacity(values.len() * 20 + 2);
    body.push_str("y\n");
    for v in values {
        body.push_str(&format!("{v}\n"));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&target))
}

/// Compact JSON whose floats carry 17 significant digits.
struct PreciseFloats;

impl serde_json::ser::Formatter for PreciseFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFloats);
    value.serialize(&mut ser).expect("report types serialize");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut w = open_output(path)?;
    let target = out_path(path);
    let text = to_json(value);
    w.write_all(text.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(io_err(&target))
}

pub fn write_csv_rows<T: Serialize>(path: Option<&Path>, rows: &[T]) -> CliResult<()> {
    let target = out_path(path);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(open_output(path)?);
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Parse(format!("{}: {e}", target.display())))?;
    }
    w.flush().map_err(io_err(&target))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}
