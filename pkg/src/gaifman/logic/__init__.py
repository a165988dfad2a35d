from .ast import (And, Atom, Const, Exists, Forall, Formula, Implies, Not, Or, Var,
                  counting_variables, free_variables, quantifier_depth, target_variables,
                  to_text)
from .eval import count, evaluate, relativize, relativized_evaluate, result_set
from .features import (FeatureSet, default_feature_set, load_feature_file,
                       parse_feature_text, relation_union_features, write_feature_file,
                       path_features, union)
from .parser import parse

__all__ = [
    "And", "Atom", "Const", "Exists", "Forall", "Formula", "Implies", "Not", "Or", "Var",
    "counting_variables", "free_variables", "quantifier_depth", "target_variables", "to_text",
    "count", "evaluate", "relativize", "relativized_evaluate", "result_set",
    "FeatureSet", "default_feature_set", "load_feature_file", "parse_feature_text",
    "relation_union_features", "write_feature_file", "parse", "path_features", "union",
]
