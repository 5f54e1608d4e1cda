//! Graph-spec expressions such as `product(path(2,15),path(27,175))`.
//!
//! ```text
//! graph := path(K,w) | cycle(K,w) | star(K,w) | wheel(K,w) | complete(K,w)
//!        | bipartite(a,b,w) | product(graph,graph) | scale(alpha,graph)
//! ```
//!
//! Names are case-insensitive and whitespace is ignored. Error columns are 1-based.

use super::graph::WeightedGraph;
use crate::error::{Error, Result};

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn err<T>(message: impl Into<String>, pos: usize) -> Result<T> {
    Err(Error::Parse {
        message: message.into(),
        column: pos + 1,
    })
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => err(format!("expected '{want}', found '{c}'"), self.pos),
            None => err(format!("expected '{want}', found end of input"), self.pos),
        }
    }

    fn ident(&mut self) -> Result<(String, usize)> {
        self.skip_ws();
        let start = self.pos;
        let len = self.src[start..]
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(self.src.len() - start);
        if len == 0 {
            return match self.src[start..].chars().next() {
                Some(c) => err(format!("expected a graph name, found '{c}'"), start),
                None => err("expected a graph name, found end of input", start),
            };
        }
        self.pos += len;
        Ok((self.src[start..start + len].to_ascii_lowercase(), start))
    }

    fn number(&mut self) -> Result<(f64, usize)> {
        self.skip_ws();
        let start = self.pos;
        let len = self.src[start..]
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-')))
            .unwrap_or(self.src.len() - start);
        let text = &self.src[start..start + len];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos += len;
                Ok((v, start))
            }
            _ if text.is_empty() => err("expected a number", start),
            _ => err(format!("invalid number '{text}'"), start),
        }
    }

    fn count(&mut self) -> Result<usize> {
        let (v, at) = self.number()?;
        if v < 0.0 || v.fract() != 0.0 {
            return err(format!("expected a nonnegative integer, found {v}"), at);
        }
        Ok(v as usize)
    }

    fn graph(&mut self) -> Result<WeightedGraph> {
        let (name, at) = self.ident()?;
        self.expect('(')?;
        let build = |r: Result<WeightedGraph>| -> Result<WeightedGraph> {
            r.or_else(|e| match e {
                Error::InvalidArgument(msg) => err(msg, at),
                other => Err(other),
            })
        };
        let g = match name.as_str() {
            "path" | "cycle" | "star" | "wheel" | "complete" => {
                let k = self.count()?;
                self.expect(',')?;
                let (w, _) = self.number()?;
                build(match name.as_str() {
                    "path" => WeightedGraph::path(k, w),
                    "cycle" => WeightedGraph::cycle(k, w),
                    "star" => WeightedGraph::star(k, w),
                    "wheel" => WeightedGraph::wheel(k, w),
                    _ => WeightedGraph::complete(k, w),
                })?
            }
            "bipartite" => {
                let a = self.count()?;
                self.expect(',')?;
                let b = self.count()?;
                self.expect(',')?;
                let (w, _) = self.number()?;
                build(WeightedGraph::complete_bipartite(a, b, w))?
            }
            "product" => {
                let left = self.graph()?;
                self.expect(',')?;
                let right = self.graph()?;
                left.cartesian_product(&right)
            }
            "scale" => {
                let (alpha, _) = self.number()?;
                self.expect(',')?;
                let inner = self.graph()?;
                build(inner.scale_weights(alpha))?
            }
            other => return err(format!("unknown graph '{other}'"), at),
        };
        self.expect(')')?;
        Ok(g)
    }
}

/// Parses a graph-spec expression.
pub fn parse_graph(src: &str) -> Result<WeightedGraph> {
    let mut p = Parser { src, pos: 0 };
    let g = p.graph()?;
    if let Some(c) = p.peek() {
        return err(format!("unexpected trailing '{c}'"), p.pos);
    }
    Ok(g)
}
