"""
Rule-based planner: binds a query against a catalog snapshot, negotiates
push-down with the wrappers and builds the operator tree the executor runs.

Joins stay in FROM order (left-deep). A join becomes a BindJoin when the inner
side is a foreign scan whose wrapper would accept the join keys as equality
filters and the outer side is estimated small enough; otherwise HashJoin.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Set, Tuple, Union

from .catalog import CatalogSnapshot, ForeignTableDef, MatViewDef
from .errors import PlanningError, PolyglotError
from .executor import (
    Aggregate,
    BindJoin,
    Distinct,
    Extract,
    Filter,
    ForeignScan,
    HashJoin,
    Limit,
    MatViewScan,
    Operator,
    Project,
    Sort,
    Unnest,
    Values,
)
from .expressions import (
    FLIPPED,
    NEGATED,
    BoundExpr,
    Field,
    Scope,
    aggregate_type,
    compile_expr,
    compile_predicate,
    constant_value,
    literal_for_column,
)
from .pipeline import leading_unwinds
from .relmodel import Row
from .sql_ast import (
    COMPARISON_OPS,
    AggCall,
    Arithmetic,
    ColumnRef,
    Comparison,
    Expr,
    InList,
    IsNull,
    Join,
    Literal,
    Logical,
    Not,
    OrderItem,
    Query,
    SelectItem,
    Star,
    TableRef,
    UnaryMinus,
    contains_aggregate,
    table_refs,
    walk,
)
from .sql_render import render_expr
from .wrapper import (
    DEFAULT_CARDINALITY,
    AggregateRequest,
    AggregateSpec,
    ForeignDataWrapper,
    Predicate,
    ScanPlan,
    ScanRequest,
    SortKey,
)

logger = logging.getLogger(__name__)

JOIN_STRATEGIES = ("hash", "bind")


class ViewSource(Protocol):
    def rows(self, name: str) -> Sequence[Row]:
        ...


WrapperLookup = Callable[[ForeignTableDef], ForeignDataWrapper]


@dataclass(frozen=True)
class PlannerOptions:
    bind_join_threshold: int = 1000
    force_join: Optional[str] = None
    cnf_max_conjuncts: int = 64

    def __post_init__(self) -> None:
        if self.force_join is not None and self.force_join not in JOIN_STRATEGIES:
            raise ValueError(f"force_join must be one of {JOIN_STRATEGIES}")


@dataclass
class LogicalPlan:
    """Root operator plus the result column labels."""

    root: Operator
    columns: List[str]

    def explain(self) -> str:
        return self.root.explain()


@dataclass
class _Relation:
    ref: TableRef
    definition: Union[ForeignTableDef, MatViewDef]
    required: List[str] = field(default_factory=list)
    local: List[Expr] = field(default_factory=list)

    @property
    def binding(self) -> str:
        return self.ref.binding

    @property
    def is_foreign(self) -> bool:
        return isinstance(self.definition, ForeignTableDef)

    def fields(self) -> List[Field]:
        return [Field(c.name, c.type, self.binding) for c in self.definition.schema.columns]


@dataclass
class _ScanInfo:
    """What a relation's scan produced: the operator and, for foreign tables, the negotiation."""

    operator: Operator
    plan: Optional[ScanPlan] = None
    wrapper: Optional[ForeignDataWrapper] = None
    request: Optional[ScanRequest] = None
    extra_filters: List[Expr] = field(default_factory=list)


# expression rewriting


def rewrite(expr: Expr, column: Callable[[ColumnRef], Expr]) -> Expr:
    """Rebuild expr with every column reference replaced by column(ref)."""
    if isinstance(expr, ColumnRef):
        return column(expr)
    if isinstance(expr, (UnaryMinus, Not, IsNull)):
        return replace(expr, operand=rewrite(expr.operand, column))
    if isinstance(expr, (Arithmetic, Comparison, Logical)):
        return replace(expr, left=rewrite(expr.left, column), right=rewrite(expr.right, column))
    if isinstance(expr, InList):
        return replace(
            expr, operand=rewrite(expr.operand, column), items=tuple(rewrite(i, column) for i in expr.items)
        )
    if isinstance(expr, AggCall) and expr.arg is not None:
        return replace(expr, arg=rewrite(expr.arg, column))
    return expr


def split_conjuncts(expr: Optional[Expr]) -> List[Expr]:
    if expr is None:
        return []
    if isinstance(expr, Logical) and expr.op == "AND":
        return split_conjuncts(expr.left) + split_conjuncts(expr.right)
    return [expr]


def and_chain(exprs: Sequence[Expr]) -> Expr:
    result = exprs[0]
    for expr in exprs[1:]:
        result = Logical("AND", result, expr)
    return result


def or_chain(exprs: Sequence[Expr]) -> Expr:
    result = exprs[0]
    for expr in exprs[1:]:
        result = Logical("OR", result, expr)
    return result


def push_negations(expr: Expr, negate: bool = False) -> Expr:
    """Negation normal form; valid under three-valued logic."""
    if isinstance(expr, Not):
        return push_negations(expr.operand, not negate)
    if isinstance(expr, Logical):
        op = expr.op if not negate else ("OR" if expr.op == "AND" else "AND")
        return Logical(op, push_negations(expr.left, negate), push_negations(expr.right, negate))
    if not negate:
        return expr
    if isinstance(expr, Comparison):
        return Comparison(NEGATED[expr.op], expr.left, expr.right)
    if isinstance(expr, (InList, IsNull)):
        return replace(expr, negated=not expr.negated)
    return Not(expr)


def cnf_clauses(expr: Expr, limit: int) -> Optional[List[List[Expr]]]:
    """Clauses (disjunctions) of expr's conjunctive normal form, or None past limit."""
    if isinstance(expr, Logical):
        left = cnf_clauses(expr.left, limit)
        right = cnf_clauses(expr.right, limit)
        if left is None or right is None:
            return None
        if expr.op == "AND":
            clauses = left + right
        else:
            clauses = []
            for a in left:
                for b in right:
                    merged = list(a)
                    merged.extend(x for x in b if x not in merged)
                    clauses.append(merged)
        return clauses if len(clauses) <= limit else None
    return [[expr]]


def clause_expr(literals: List[Expr]) -> Expr:
    """A disjunction; equalities of one column with constants become an IN list."""
    if len(literals) > 1:
        column: Optional[Expr] = None
        values: List[Expr] = []
        for literal in literals:
            if not (isinstance(literal, Comparison) and literal.op == "="):
                break
            if isinstance(literal.left, ColumnRef) and constant_value(literal.right)[0]:
                ref, constant = literal.left, literal.right
            elif isinstance(literal.right, ColumnRef) and constant_value(literal.left)[0]:
                ref, constant = literal.right, literal.left
            else:
                break
            if column is not None and ref != column:
                break
            column = ref
            values.append(constant)
        else:
            return InList(column, tuple(values))  # type: ignore[arg-type]
    return or_chain(literals)


def output_label(item: SelectItem) -> str:
    if item.alias:
        return item.alias
    if isinstance(item.expr, ColumnRef):
        return item.expr.name
    if isinstance(item.expr, AggCall):
        return item.expr.func.lower()
    return "?column?"


class Planner:
    def __init__(
        self,
        catalog: CatalogSnapshot,
        wrappers: WrapperLookup,
        views: Optional[ViewSource] = None,
        options: Optional[PlannerOptions] = None,
    ):
        self.catalog = catalog
        self.wrappers = wrappers
        self.views = views
        self.options = options or PlannerOptions()

    # binding

    def _relations(self, query: Query) -> List[_Relation]:
        relations: List[_Relation] = []
        seen: Set[str] = set()
        for ref in table_refs(query.from_items):
            definition = self.catalog.resolve(ref.name)
            relation = _Relation(ref, definition)
            if relation.binding in seen:
                raise PlanningError(f"table name {relation.binding!r} specified more than once")
            seen.add(relation.binding)
            relations.append(relation)
        return relations

    @staticmethod
    def _expand_select(query: Query, relations: List[_Relation]) -> List[SelectItem]:
        items: List[SelectItem] = []
        for item in query.select_items:
            if not isinstance(item.expr, Star):
                items.append(item)
                continue
            if not relations:
                raise PlanningError("SELECT * with no tables specified is not valid")
            chosen = [r for r in relations if item.expr.table is None or r.binding == item.expr.table]
            if not chosen:
                raise PlanningError(f"missing FROM-clause entry for table {item.expr.table!r}")
            for relation in chosen:
                for column in relation.definition.schema.columns:
                    items.append(SelectItem(ColumnRef(column.name, relation.binding)))
        return items

    @staticmethod
    def _resolve_output_ref(expr: Expr, items: List[SelectItem]) -> Expr:
        """ORDER BY / GROUP BY ordinals and output-name references."""
        if isinstance(expr, Literal) and isinstance(expr.value, int) and not isinstance(expr.value, bool):
            if not 1 <= expr.value <= len(items):
                raise PlanningError(f"position {expr.value} is not in select list")
            return items[expr.value - 1].expr
        if isinstance(expr, ColumnRef) and expr.table is None:
            matches = [i for i in items if i.alias == expr.name]
            if len(matches) == 1:
                return matches[0].expr
        return expr

    # push-down

    @staticmethod
    def _predicate(expr: Expr, table: ForeignTableDef) -> Optional[Predicate]:
        """The wrapper-level predicate equivalent to a single-table conjunct, if there is one."""
        if isinstance(expr, Comparison) and expr.op in COMPARISON_OPS:
            left_const, left_value = constant_value(expr.left)
            right_const, right_value = constant_value(expr.right)
            if isinstance(expr.left, ColumnRef) and right_const:
                ref, op, value = expr.left, expr.op, right_value
            elif isinstance(expr.right, ColumnRef) and left_const:
                ref, op, value = expr.right, FLIPPED[expr.op], left_value
            else:
                return None
            column = table.schema.column(ref.name)
            ok, converted = literal_for_column(value, column.type)
            return Predicate(ref.name, op, converted) if ok else None
        if isinstance(expr, InList) and not expr.negated and isinstance(expr.operand, ColumnRef):
            column = table.schema.column(expr.operand.name)
            values = []
            for item in expr.items:
                is_const, value = constant_value(item)
                if not is_const:
                    return None
                ok, converted = literal_for_column(value, column.type)
                if not ok:
                    return None
                values.append(converted)
            return Predicate(expr.operand.name, "IN", tuple(values))
        return None

    def _foreign_scan(
        self,
        relation: _Relation,
        sort: Tuple[SortKey, ...] = (),
        limit: Optional[int] = None,
        aggregate: Optional[AggregateRequest] = None,
    ) -> _ScanInfo:
        table = relation.definition
        assert isinstance(table, ForeignTableDef)
        wrapper = self.wrappers(table)
        filters: List[Predicate] = []
        sources: Dict[int, Expr] = {}
        others: List[Expr] = []
        for conjunct in relation.local:
            predicate = self._predicate(conjunct, table)
            if predicate is None:
                others.append(conjunct)
            else:
                filters.append(predicate)
                sources[id(predicate)] = conjunct
        request = ScanRequest(table, tuple(relation.required), tuple(filters), sort, limit, aggregate)
        plan = wrapper.plan_scan(request)
        logger.debug(
            f"Scan of {table.qualified}: accepted {[p.render() for p in plan.accepted]}, "
            f"residual {[p.render() for p in plan.residual]}"
        )

        if plan.raw_documents:
            raw_scope = Scope([Field(plan.output_columns[0].name, None, relation.binding)])
            operator: Operator = ForeignScan(wrapper, plan, relation.binding, raw_scope)
            unwinds = leading_unwinds(table.fragment.stages) if table.fragment else []
            if unwinds is None:
                raise PlanningError(
                    f"pipe of {table.qualified} can only be evaluated by the store; enable native fragments"
                )
            for path in unwinds:
                operator = Unnest(operator, 0, path)
            columns = request.columns()
            scope = Scope([Field(c.name, c.type, relation.binding) for c in columns])
            operator = Extract(operator, columns, scope, wrapper.context(table))
            residual_exprs = list(relation.local)
        else:
            scope = Scope([Field(c.name, c.type, relation.binding) for c in plan.output_columns])
            operator = ForeignScan(wrapper, plan, relation.binding, scope)
            residual_exprs = [sources[id(p)] for p in plan.residual] + others

        if residual_exprs and not plan.aggregate_accepted:
            operator = Filter(operator, compile_predicate(and_chain(residual_exprs), operator.scope))
        return _ScanInfo(operator, plan, wrapper, request, others)

    def _view_scan(self, relation: _Relation) -> _ScanInfo:
        view = relation.definition
        assert isinstance(view, MatViewDef)
        if self.views is None:
            raise PlanningError(f"materialized view {view.qualified} has no storage attached")
        views = self.views
        qualified = view.qualified
        scope = Scope(relation.fields())
        try:
            estimate = float(max(len(views.rows(qualified)), 1))
        except PolyglotError:
            estimate = DEFAULT_CARDINALITY
        operator: Operator = MatViewScan(qualified, lambda: views.rows(qualified), scope, estimate)
        if relation.local:
            operator = Filter(operator, compile_predicate(and_chain(relation.local), scope))
        return _ScanInfo(operator)

    # joins

    def _join(self, left: Operator, left_bindings: Set[str], relation: _Relation, info: _ScanInfo,
              conditions: List[Expr]) -> Operator:
        equi: List[Tuple[Expr, Expr]] = []
        others: List[Expr] = []
        for condition in conditions:
            compile_predicate(condition, left.scope + info.operator.scope)
            pair = None
            if isinstance(condition, Comparison) and condition.op == "=":
                sides = [condition.left, condition.right]
                for outer, inner in (sides, sides[::-1]):
                    outer_bindings = self._bindings(outer)
                    inner_bindings = self._bindings(inner)
                    if outer_bindings and outer_bindings <= left_bindings and inner_bindings == {relation.binding}:
                        pair = (outer, inner)
                        break
            if pair is None:
                others.append(condition)
            else:
                equi.append(pair)

        joined = self._bind_join(left, relation, info, equi)
        if joined is None:
            left_keys = [compile_expr(o, left.scope) for o, _ in equi]
            right_keys = [compile_expr(i, info.operator.scope) for _, i in equi]
            joined = HashJoin(left, info.operator, left_keys, right_keys)
            logger.debug(f"HashJoin with {relation.binding} on {len(equi)} key(s)")
        if others:
            joined = Filter(joined, compile_predicate(and_chain(others), joined.scope))
        return joined

    def _bind_join(
        self, outer: Operator, relation: _Relation, info: _ScanInfo, equi: List[Tuple[Expr, Expr]]
    ) -> Optional[Operator]:
        if self.options.force_join == "hash" or info.plan is None or info.wrapper is None or not equi:
            return None
        if info.plan.raw_documents:
            return None
        keys: List[Tuple[Expr, str]] = []
        # a second key on the same inner column is checked after the lookup
        repeated: List[Expr] = []
        for outer_expr, inner_expr in equi:
            if not isinstance(inner_expr, ColumnRef):
                return None
            if inner_expr.name in [name for _, name in keys]:
                repeated.append(Comparison("=", outer_expr, inner_expr))
            else:
                keys.append((outer_expr, inner_expr.name))
        if self.options.force_join != "bind" and outer.est_rows > self.options.bind_join_threshold:
            return None
        assert info.request is not None
        base = replace(info.request, sort=(), limit=None, aggregate=None)
        parameters = tuple(name for _, name in keys)
        hypothetical = info.wrapper.hypothetical_scan(base, parameters)
        if not info.wrapper.accepts_parameters(hypothetical, len(parameters)):
            return None
        template = info.wrapper.plan_scan(base)
        table = relation.definition
        assert isinstance(table, ForeignTableDef)
        inner_scope = Scope([Field(c.name, c.type, relation.binding) for c in template.output_columns])
        inner_filter = None
        if info.extra_filters:
            inner_filter = compile_predicate(and_chain(info.extra_filters), inner_scope)
        outer_keys = [compile_expr(o, outer.scope) for o, _ in keys]
        inner_columns = [table.schema.column(name) for name in parameters]
        operator = BindJoin(
            outer,
            info.wrapper,
            template,
            outer_keys,
            inner_columns,
            inner_scope,
            inner_filter,
            relation.binding,
            lookup_text=hypothetical.native_text,
        )
        logger.debug(f"BindJoin with {relation.binding} on {parameters}")
        if repeated:
            return Filter(operator, compile_predicate(and_chain(repeated), operator.scope))
        return operator

    @staticmethod
    def _bindings(expr: Expr) -> Set[str]:
        return {node.table for node in walk(expr) if isinstance(node, ColumnRef) and node.table}

    # main entry

    def plan(self, query: Query) -> LogicalPlan:
        relations = self._relations(query)
        catalog_scope = Scope([f for r in relations for f in r.fields()])

        def qualify(expr: Expr) -> Expr:
            def column(ref: ColumnRef) -> Expr:
                position = catalog_scope.resolve(ref)
                found = catalog_scope.fields[position]
                return ColumnRef(found.name, found.binding)

            return rewrite(expr, column)

        items = self._expand_select(query, relations)
        select_exprs = [qualify(i.expr) for i in items]
        qualified_items = [SelectItem(e, i.alias) for e, i in zip(select_exprs, items)]
        group_exprs = [qualify(self._resolve_output_ref(g, items)) for g in query.group_by]
        order_items = [
            OrderItem(qualify(self._resolve_output_ref(o.expr, items)), o.descending) for o in query.order_by
        ]
        having = qualify(query.having) if query.having is not None else None

        where_parts = split_conjuncts(query.where)
        for item in query.from_items:
            while isinstance(item, Join):
                where_parts.extend(split_conjuncts(item.condition))
                item = item.left
        conjuncts: List[Expr] = []
        for part in where_parts:
            if contains_aggregate(part):
                raise PlanningError("aggregate functions are not allowed in WHERE or JOIN conditions")
            part = qualify(part)
            compile_predicate(part, catalog_scope)
            conjuncts.extend(self._normalise(part))

        # columns each scan must deliver
        referenced: Dict[str, Set[str]] = {r.binding: set() for r in relations}
        every_expr = select_exprs + group_exprs + [o.expr for o in order_items] + conjuncts
        if having is not None:
            every_expr.append(having)
        for expr in every_expr:
            for node in walk(expr):
                if isinstance(node, ColumnRef) and node.table in referenced:
                    referenced[node.table].add(node.name)
        for relation in relations:
            relation.required = [
                c.name for c in relation.definition.schema.columns if c.name in referenced[relation.binding]
            ]

        constants: List[Expr] = []
        multi: List[Tuple[Set[str], Expr]] = []
        by_binding = {r.binding: r for r in relations}
        for conjunct in conjuncts:
            bindings = self._bindings(conjunct)
            if not bindings:
                constants.append(conjunct)
            elif len(bindings) == 1:
                by_binding[next(iter(bindings))].local.append(conjunct)
            else:
                multi.append((bindings, conjunct))

        aggregates: List[AggCall] = []
        for expr in select_exprs + [o.expr for o in order_items] + ([having] if having is not None else []):
            for node in walk(expr):
                if isinstance(node, AggCall):
                    if node.arg is not None and contains_aggregate(node.arg):
                        raise PlanningError("aggregate function calls cannot be nested")
                    if node not in aggregates:
                        aggregates.append(node)
        for g in group_exprs:
            if contains_aggregate(g):
                raise PlanningError("aggregate functions are not allowed in GROUP BY")
        has_aggregate = bool(group_exprs or aggregates)

        # single-scan push-down offers
        sort_offer: Tuple[SortKey, ...] = ()
        limit_offer: Optional[int] = None
        aggregate_offer: Optional[AggregateRequest] = None
        single = relations[0] if len(relations) == 1 and relations[0].is_foreign and not constants else None
        if single is not None and all(self._predicate(c, single.definition) for c in single.local):  # type: ignore[arg-type]
            if has_aggregate:
                if (
                    group_exprs
                    and all(isinstance(g, ColumnRef) for g in group_exprs)
                    and all(a.arg is None or isinstance(a.arg, ColumnRef) for a in aggregates)
                ):
                    aggregate_offer = AggregateRequest(
                        tuple(g.name for g in group_exprs),  # type: ignore[attr-defined]
                        tuple(
                            AggregateSpec(a.func, a.arg.name if a.arg is not None else None, a.distinct)  # type: ignore[attr-defined]
                            for a in aggregates
                        ),
                    )
            else:
                if order_items and all(isinstance(o.expr, ColumnRef) for o in order_items):
                    sort_offer = tuple(SortKey(o.expr.name, o.descending) for o in order_items)  # type: ignore[attr-defined]
                if query.limit is not None and not query.distinct and (not order_items or sort_offer):
                    limit_offer = query.limit

        # scans and joins
        infos: List[_ScanInfo] = []
        for relation in relations:
            if relation.is_foreign:
                if relation is single:
                    infos.append(self._foreign_scan(relation, sort_offer, limit_offer, aggregate_offer))
                else:
                    infos.append(self._foreign_scan(relation))
            else:
                infos.append(self._view_scan(relation))

        root: Operator
        if not relations:
            root = Values()
        else:
            root = infos[0].operator
            bindings = {relations[0].binding}
            for relation, info in zip(relations[1:], infos[1:]):
                available = bindings | {relation.binding}
                ready = [c for b, c in multi if b <= available and relation.binding in b]
                multi = [(b, c) for b, c in multi if not (b <= available and relation.binding in b)]
                root = self._join(root, bindings, relation, info, ready)
                bindings = available
        leftovers = constants + [c for _, c in multi]
        if leftovers:
            root = Filter(root, compile_predicate(and_chain(leftovers), root.scope))

        first_plan = infos[0].plan if infos else None
        aggregate_pushed = bool(first_plan is not None and first_plan.aggregate_accepted)
        sort_pushed = bool(first_plan is not None and first_plan.sort_accepted)

        substitutions: Optional[Dict[Expr, int]] = None
        if has_aggregate:
            substitutions = {}
            for i, g in enumerate(group_exprs):
                substitutions.setdefault(g, i)
            for j, call in enumerate(aggregates):
                substitutions[call] = len(group_exprs) + j
            if not aggregate_pushed:
                groups = [compile_expr(g, root.scope) for g in group_exprs]
                bound_aggs: List[Tuple[AggCall, Optional[BoundExpr]]] = []
                fields = [Field(render_expr(g), b.type) for g, b in zip(group_exprs, groups)]
                for call in aggregates:
                    arg = compile_expr(call.arg, root.scope) if call.arg is not None else None
                    bound_aggs.append((call, arg))
                    fields.append(Field(render_expr(call), aggregate_type(call, arg.type if arg else None)))
                root = Aggregate(root, groups, bound_aggs, Scope(fields))
            if having is not None:
                root = Filter(root, compile_predicate(having, root.scope, substitutions))

        # projection, ordering and limit
        labels = [output_label(i) for i in items]
        described = [
            render_expr(i.expr) + (f" AS {i.alias}" if i.alias else "") for i in qualified_items
        ]
        bound_select = [compile_expr(e, root.scope, substitutions) for e in select_exprs]
        hidden: List[Expr] = []
        sort_positions: List[Tuple[int, bool]] = []
        for order in order_items:
            if order.expr in select_exprs:
                sort_positions.append((select_exprs.index(order.expr), order.descending))
            else:
                if order.expr not in hidden:
                    hidden.append(order.expr)
                sort_positions.append((len(select_exprs) + hidden.index(order.expr), order.descending))
        if query.distinct and hidden:
            raise PlanningError("for SELECT DISTINCT, ORDER BY expressions must appear in select list")
        bound_hidden = [compile_expr(e, root.scope, substitutions) for e in hidden]
        projected = bound_select + bound_hidden
        fields = [Field(label, b.type) for label, b in zip(labels, bound_select)]
        fields += [Field(b.text, b.type) for b in bound_hidden]
        scope = Scope(fields)
        root = Project(root, projected, scope, described + [b.text for b in bound_hidden])
        if query.distinct:
            root = Distinct(root)
        if order_items and not sort_pushed:
            keys = [(self._position(scope, p), d) for p, d in sort_positions]
            root = Sort(root, keys)
        if hidden:
            visible = Scope(scope.fields[: len(select_exprs)])
            root = Project(root, [self._position(scope, i) for i in range(len(select_exprs))], visible, labels)
        if query.limit is not None:
            root = Limit(root, query.limit)
        return LogicalPlan(root, labels)

    @staticmethod
    def _position(scope: Scope, position: int) -> BoundExpr:
        return BoundExpr(lambda row: row[position], scope.fields[position].type, scope.fields[position].name)

    def _normalise(self, conjunct: Expr) -> List[Expr]:
        """CNF for single-table disjunctions; anything else is kept as written."""
        normal = push_negations(conjunct)
        if not (isinstance(normal, Logical) and normal.op == "OR") or len(self._bindings(normal)) != 1:
            return split_conjuncts(normal)
        clauses = cnf_clauses(normal, self.options.cnf_max_conjuncts)
        if clauses is None:
            return [normal]
        return [clause_expr(c) for c in clauses]

    def explain(self, query: Query) -> str:
        return self.plan(query).explain()
