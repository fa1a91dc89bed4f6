use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, DenseLayer, DenseNet, NetRole};
use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "PGANCKPT v1";

fn join(values: impl Iterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // 17 significant digits round-trip every f64.
        write!(s, "{v:.16e}").expect("write to string");
    }
    s
}

/// Text encoding of a network: header, then per layer a `layer <role> <out> <in> <act>`
/// line, `out` weight rows and one bias line.
pub fn encode_checkpoint(net: &DenseNet) -> String {
    let mut out = String::from(CHECKPOINT_HEADER);
    out.push('\n');
    for l in &net.layers {
        writeln!(
            out,
            "layer {} {} {} {}",
            net.role.tag(),
            l.out_dim(),
            l.in_dim(),
            l.activation.tag()
        )
        .expect("write to string");
        for row in l.weights.rows() {
            out.push_str(&join(row.iter().copied()));
            out.push('\n');
        }
        out.push_str(&join(l.bias.iter().copied()));
        out.push('\n');
    }
    out
}

pub fn decode_checkpoint(text: &str, context: &str) -> Result<DenseNet> {
    let bad = |detail: String| Error::parse(context, detail);
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CHECKPOINT_HEADER => {}
        Some((_, h)) => {
            return Err(bad(format!(
                "expected header `{CHECKPOINT_HEADER}`, found `{h}`"
            )))
        }
        None => return Err(bad("empty checkpoint".into())),
    }
    let parse_row = |lineno: usize, line: Option<&str>, want: usize| -> Result<Vec<f64>> {
        let line =
            line.ok_or_else(|| bad(format!("unexpected end of file at line {}", lineno + 1)))?;
        let vals = line
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != want {
            return Err(bad(format!(
                "line {}: expected {want} values, found {}",
                lineno + 1,
                vals.len()
            )));
        }
        Ok(vals)
    };

    let mut role = None;
    let mut layers = Vec::new();
    while let Some((lineno, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        let [kw, r, out, inp, act] = fields[..] else {
            return Err(bad(format!("line {}: malformed layer record", lineno + 1)));
        };
        if kw != "layer" {
            return Err(bad(format!(
                "line {}: expected `layer`, found `{kw}`",
                lineno + 1
            )));
        }
        let r = NetRole::from_tag(r).ok_or_else(|| bad(format!("unknown role `{r}`")))?;
        if role.is_some_and(|prev| prev != r) {
            return Err(bad("layers disagree on the network role".into()));
        }
        role = Some(r);
        let out: usize = out
            .parse()
            .map_err(|_| bad(format!("bad out dimension `{out}`")))?;
        let inp: usize = inp
            .parse()
            .map_err(|_| bad(format!("bad in dimension `{inp}`")))?;
        let act =
            Activation::from_tag(act).ok_or_else(|| bad(format!("unknown activation `{act}`")))?;
        let mut weights = Vec::with_capacity(out * inp);
        for _ in 0..out {
            let (n, l) = lines
                .next()
                .map_or((lineno + 1, None), |(n, l)| (n, Some(l)));
            weights.extend(parse_row(n, l, inp)?);
        }
        let (n, l) = lines
            .next()
            .map_or((lineno + 1, None), |(n, l)| (n, Some(l)));
        let bias = parse_row(n, l, out)?;
        let weights = Array2::from_shape_vec((out, inp), weights).expect("row count checked");
        layers.push(DenseLayer::new(weights, Array1::from(bias), act)?);
    }
    let role = role.ok_or_else(|| bad("checkpoint has no layers".into()))?;
    DenseNet::new(role, layers)
}

/// Writes the checkpoint, creating missing parent directories.
pub fn write_checkpoint(net: &DenseNet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<DenseNet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut r = rng::stream(11, 0);
        let mut net = DenseNet::mlp(
            NetRole::Generator,
            &[16, 8, 5],
            &[Activation::LeakyRelu(0.2), Activation::Tanh],
            &mut r,
        )
        .unwrap();
        net.layers[1].bias[2] = 1.0 / 3.0;
        net.layers[0].weights[[0, 0]] = -f64::MIN_POSITIVE;
        let back = decode_checkpoint(&encode_checkpoint(&net), "mem").unwrap();
        assert_eq!(back.role, net.role);
        for (a, b) in back.layers.iter().zip(&net.layers) {
            assert_eq!(a.activation, b.activation);
            assert!(a
                .weights
                .iter()
                .zip(b.weights.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a
                .bias
                .iter()
                .zip(b.bias.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ckpt");
        let mut r = rng::stream(12, 0);
        let net = DenseNet::mlp(
            NetRole::Discriminator,
            &[4, 1],
            &[Activation::Sigmoid],
            &mut r,
        )
        .unwrap();
        write_checkpoint(&net, &path).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap().layers, net.layers);
        assert!(matches!(
            read_checkpoint(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(decode_checkpoint("PGANCKPT v2\n", "x").is_err());
        assert!(decode_checkpoint("PGANCKPT v1\n", "x").is_err());
        let truncated = "PGANCKPT v1\nlayer generator 2 1 tanh\n1.0\n";
        assert!(decode_checkpoint(truncated, "x").is_err());
        let wide = "PGANCKPT v1\nlayer generator 1 1 tanh\n1.0 2.0\n0.0\n";
        assert!(decode_checkpoint(wide, "x").is_err());
        let act = "PGANCKPT v1\nlayer generator 1 1 relu\n1.0\n0.0\n";
        assert!(decode_checkpoint(act, "x").is_err());
    }
}
