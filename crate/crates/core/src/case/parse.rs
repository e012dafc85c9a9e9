use std::collections::HashMap;

use super::{Branch, Bus, BusType, CaseError, Generator, NetworkCase};

struct Matrix {
    /// (source line, values)
    rows: Vec<(usize, Vec<f64>)>,
}

enum Value {
    Scalar(f64),
    Matrix(Matrix),
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_row(block: &str, line: usize, text: &str) -> Result<Vec<f64>, CaseError> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| CaseError::MalformedRow {
                block: block.to_string(),
                line,
                reason: format!("not a number: {t:?}"),
            })
        })
        .collect()
}

/// Parses MATPOWER case text into a validated [`NetworkCase`].
///
/// Only `baseMVA`, `bus`, `gen`, `branch` and `gencost` are interpreted; other
/// `mpc.*` fields are skipped with a warning.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let mut name = String::new();
    let mut fields: HashMap<String, Value> = HashMap::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let line = strip_comment(lines[i]).trim();
        i += 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some((_, n)) = rest.split_once('=') {
                name = n.trim().trim_end_matches(';').trim().to_string();
            }
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            continue;
        };
        let Some((key, value)) = rest.split_once('=') else {
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim();
        if let Some(body) = value.strip_prefix('[') {
            let mut rows = Vec::new();
            let mut chunk = body.to_string();
            let mut chunk_line = line_no;
            loop {
                let (content, done) = match chunk.find(']') {
                    Some(end) => (chunk[..end].to_string(), true),
                    None => (chunk.clone(), false),
                };
                for piece in content.split(';') {
                    if !piece.trim().is_empty() {
                        rows.push((chunk_line, parse_row(&key, chunk_line, piece)?));
                    }
                }
                if done {
                    break;
                }
                if i >= lines.len() {
                    return Err(CaseError::MalformedRow {
                        block: key,
                        line: chunk_line,
                        reason: "unterminated matrix".into(),
                    });
                }
                chunk_line = i + 1;
                chunk = strip_comment(lines[i]).to_string();
                i += 1;
            }
            fields.insert(key, Value::Matrix(Matrix { rows }));
        } else if value.starts_with('{') {
            // cell arrays (bus names and the like) are not used
            let mut closed = value.contains('}');
            while !closed && i < lines.len() {
                closed = strip_comment(lines[i]).contains('}');
                i += 1;
            }
            log::warn!("ignoring unsupported field mpc.{key}");
        } else {
            let v = value.trim_end_matches(';').trim();
            match v.parse::<f64>() {
                Ok(x) => {
                    fields.insert(key, Value::Scalar(x));
                }
                Err(_) => {
                    if key != "version" {
                        log::warn!("ignoring unsupported field mpc.{key}");
                    }
                }
            }
        }
    }

    for k in fields.keys() {
        if !matches!(k.as_str(), "baseMVA" | "bus" | "gen" | "branch" | "gencost") {
            log::warn!("ignoring unsupported field mpc.{k}");
        }
    }

    let base_mva = match fields.get("baseMVA") {
        Some(Value::Scalar(x)) => *x,
        _ => return Err(CaseError::MissingBlock("baseMVA".into())),
    };
    let matrix = |k: &str| match fields.get(k) {
        Some(Value::Matrix(m)) => Ok(m),
        _ => Err(CaseError::MissingBlock(k.into())),
    };
    let bus_m = matrix("bus")?;
    let gen_m = matrix("gen")?;
    let branch_m = matrix("branch")?;
    let cost_m = matrix("gencost")?;

    let short = |block: &str, line: usize, need: usize, got: usize| CaseError::MalformedRow {
        block: block.into(),
        line,
        reason: format!("expected at least {need} columns, found {got}"),
    };

    let mut buses = Vec::with_capacity(bus_m.rows.len());
    for (line, r) in &bus_m.rows {
        if r.len() < 13 {
            return Err(short("bus", *line, 13, r.len()));
        }
        let bus_type = BusType::from_code(r[1]).ok_or_else(|| CaseError::MalformedRow {
            block: "bus".into(),
            line: *line,
            reason: format!("unsupported bus type {}", r[1]),
        })?;
        buses.push(Bus {
            id: r[0] as u32,
            bus_type,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            vm: r[7],
            va: r[8],
            base_kv: r[9],
            vmax: r[11],
            vmin: r[12],
        });
    }

    if cost_m.rows.len() < gen_m.rows.len() {
        return Err(CaseError::MalformedRow {
            block: "gencost".into(),
            line: cost_m.rows.last().map(|r| r.0).unwrap_or(0),
            reason: format!(
                "{} cost rows for {} generators",
                cost_m.rows.len(),
                gen_m.rows.len()
            ),
        });
    }

    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for ((line, r), (cline, c)) in gen_m.rows.iter().zip(&cost_m.rows) {
        if r.len() < 10 {
            return Err(short("gen", *line, 10, r.len()));
        }
        if c.len() < 4 {
            return Err(short("gencost", *cline, 4, c.len()));
        }
        if c[0] != 2.0 {
            return Err(CaseError::MalformedRow {
                block: "gencost".into(),
                line: *cline,
                reason: "only polynomial cost (model 2) is supported".into(),
            });
        }
        let n = c[3] as usize;
        if c.len() < 4 + n {
            return Err(short("gencost", *cline, 4 + n, c.len()));
        }
        if n > 3 {
            return Err(CaseError::MalformedRow {
                block: "gencost".into(),
                line: *cline,
                reason: format!("polynomial of degree {} exceeds 2", n - 1),
            });
        }
        generators.push(Generator {
            bus_id: r[0] as u32,
            pg: r[1],
            qg: r[2],
            qmax: r[3],
            qmin: r[4],
            vg: r[5],
            mbase: r[6],
            status: r[7] > 0.0,
            pmax: r[8],
            pmin: r[9],
            cost: c[4..4 + n].to_vec(),
        });
    }

    let mut branches = Vec::with_capacity(branch_m.rows.len());
    for (line, r) in &branch_m.rows {
        if r.len() < 11 {
            return Err(short("branch", *line, 11, r.len()));
        }
        branches.push(Branch {
            from_bus: r[0] as u32,
            to_bus: r[1] as u32,
            r: r[2],
            x: r[3],
            b: r[4],
            s_max: r[5],
            tap: r[8],
            shift: r[9],
            status: r[10] > 0.0,
        });
    }

    NetworkCase::new(name, base_mva, buses, generators, branches)
}
