//! CSV output. Every campaign row type declares its header once; files are
//! written with RFC 4180 quoting and are byte-identical for identical rows.

use std::io::Write;
use std::path::Path;

pub trait CsvRow {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn write_csv<R: CsvRow, W: Write>(rows: &[R], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(out);
    w.write_record(R::HEADER)?;
    for row in rows {
        let fields = row.fields();
        debug_assert_eq!(fields.len(), R::HEADER.len());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<R: CsvRow>(rows: &[R]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Writes `rows` to `path`, header first, replacing any existing file.
pub fn emit_report<R: CsvRow>(rows: &[R], path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(std::io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Row(&'static str, u32);

    impl CsvRow for Row {
        const HEADER: &'static [&'static str] = &["name", "value"];
        fn fields(&self) -> Vec<String> {
            vec![self.0.to_string(), self.1.to_string()]
        }
    }

    #[test]
    fn header_only_when_empty() {
        assert_eq!(to_csv_string::<Row>(&[]), "name,value\r\n");
    }

    #[test]
    fn quoting_and_stability() {
        let rows = [Row("(10,9)-raid+m", 3), Row("say \"hi\"", 4)];
        let a = to_csv_string(&rows);
        assert_eq!(
            a,
            "name,value\r\n\"(10,9)-raid+m\",3\r\n\"say \"\"hi\"\"\",4\r\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_report(&rows, &p).unwrap();
        let first = std::fs::read(&p).unwrap();
        emit_report(&rows, &p).unwrap();
        assert_eq!(first, std::fs::read(&p).unwrap());
        assert_eq!(first, a.as_bytes());
    }
}
