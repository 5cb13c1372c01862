import json
from datetime import datetime

from flask_sqlalchemy import SQLAlchemy

db = SQLAlchemy()


class Solution(db.Model):
    __tablename__ = "solutions"

    id = db.Column(db.Integer, primary_key=True, autoincrement=True)
    problem = db.Column(db.String(50), nullable=False)
    coords = db.Column(db.String(20), nullable=False)
    smoothing = db.Column(db.String(10), nullable=False)
    use_stm = db.Column(db.Boolean, default=True, nullable=False)
    seed = db.Column(db.Integer)  # 显式给出 eta0 时为空
    n_rev = db.Column(db.Integer, default=0)
    rho_init = db.Column(db.Float, nullable=False)
    rho_final = db.Column(db.Float, nullable=False)
    converged = db.Column(db.Boolean, default=False, nullable=False)
    final_mass_kg = db.Column(db.Float)
    residual_inf_norm = db.Column(db.Float)
    payload = db.Column(db.Text, nullable=False)  # SolveReport.to_dict() 的 JSON
    created_at = db.Column(db.DateTime, default=datetime.utcnow)

    def to_dict(self):
        data = json.loads(self.payload)
        data["id"] = self.id
        data["created_at"] = (
            self.created_at.strftime("%Y-%m-%d %H:%M:%S") if self.created_at else None
        )
        return data

    def __repr__(self):
        return f"<Solution {self.id} {self.problem}/{self.coords}/{self.smoothing}>"


class SolveLog(db.Model):
    __tablename__ = "solve_log"

    id = db.Column(db.Integer, primary_key=True, autoincrement=True)
    problem = db.Column(db.String(50), nullable=False)
    coords = db.Column(db.String(20), nullable=False)
    solve_time = db.Column(db.DateTime, default=datetime.utcnow)
    success = db.Column(db.Integer, default=1)  # 1 converged, 0 failed
    wall_time = db.Column(db.Float)

    def __repr__(self):
        return f"<SolveLog {self.problem} {self.coords}>"
