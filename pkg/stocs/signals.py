from django.dispatch import Signal

index_points_added = Signal()

outer_iteration_completed = Signal()

solve_finished = Signal()
