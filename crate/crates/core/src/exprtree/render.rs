use super::{ExprError, ExpressionTree, Node, UnaryOp, VariableSchema};

/// Shortest decimal form that parses back to the same `f64`. Very large or
/// very small magnitudes use exponent notation. The sign is not written.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-6..1e16).contains(&a) {
        format!("{a:e}")
    } else {
        format!("{a}")
    }
}

/// Fully parenthesised infix rendering.
pub fn render(tree: &ExpressionTree, schema: &VariableSchema) -> Result<String, ExprError> {
    tree.check_schema(schema)?;
    let mut out = String::new();
    render_node(tree.root(), schema, &mut out);
    Ok(out)
}

fn render_node(node: &Node, schema: &VariableSchema, out: &mut String) {
    match node {
        Node::Constant(v) => {
            if v.is_sign_negative() {
                out.push_str("(-");
                out.push_str(&format_number(*v));
                out.push(')');
            } else {
                out.push_str(&format_number(*v));
            }
        }
        Node::Variable(i) => out.push_str(&schema.names()[*i]),
        Node::Unary(UnaryOp::Neg, c) => {
            out.push_str("(-(");
            render_node(c, schema, out);
            out.push_str("))");
        }
        Node::Unary(op, c) => {
            out.push_str(op.name());
            out.push('(');
            render_node(c, schema, out);
            out.push(')');
        }
        Node::Binary(op, l, r) => {
            out.push('(');
            render_node(l, schema, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            render_node(r, schema, out);
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprtree::{parse, BinaryOp};

    #[test]
    fn renders_examples() {
        let s = VariableSchema::from_names(&["x"]).unwrap();
        let t = ExpressionTree::new(Node::binary(
            BinaryOp::Add,
            Node::var(0),
            Node::constant(1.0),
        ))
        .unwrap();
        assert_eq!(render(&t, &s).unwrap(), "(x + 1)");
        let t = ExpressionTree::new(Node::unary(UnaryOp::Neg, Node::var(0))).unwrap();
        assert_eq!(render(&t, &s).unwrap(), "(-(x))");
    }

    #[test]
    fn out_of_schema_variable_is_an_error() {
        let s = VariableSchema::from_names(&["x"]).unwrap();
        let t = ExpressionTree::new(Node::var(3)).unwrap();
        assert!(matches!(
            render(&t, &s),
            Err(ExprError::VariableOutOfRange { index: 3, len: 1 })
        ));
    }

    #[test]
    fn constants_round_trip_bit_exact() {
        let s = VariableSchema::from_names::<&str>(&[]).unwrap();
        for v in [
            0.1 + 0.2,
            -0.0,
            1e300,
            -1.234_567_890_123_456_7e-200,
            std::f64::consts::PI,
            9.81,
            f64::MIN_POSITIVE,
            f64::MAX,
        ] {
            let t = ExpressionTree::new(Node::constant(v)).unwrap();
            let back = parse(&render(&t, &s).unwrap(), &s).unwrap();
            match back.root() {
                Node::Constant(b) => assert_eq!(b.to_bits(), v.to_bits(), "{v}"),
                other => panic!("{other:?}"),
            }
        }
    }
}
